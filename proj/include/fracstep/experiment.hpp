#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "fracstep/analysis.hpp"
#include "fracstep/caputo_kernel.hpp"
#include "fracstep/problem.hpp"
#include "fracstep/recurrence.hpp"
#include "fracstep/solver.hpp"

namespace fracstep {

/// Invalid experiment configuration; `key()` names the offending entry.
class ConfigError : public ValidationError {
public:
    ConfigError(std::string key, const std::string& what)
        : ValidationError("config key '" + key + "': " + what), key_(std::move(key)) {}
    const std::string& key() const { return key_; }

private:
    std::string key_;
};

enum class ExitCode : int { Ok = 0, ConfigError = 1, NumericalFailure = 2 };

struct ExperimentConfig {
    std::string example = "1";  // 1 | 2 | custom
    std::vector<double> alphas{0.5};
    std::vector<std::string> gradings{"2"};  // numbers or "2/alpha"
    std::vector<int> Ns{64, 128};
    int M1 = 25;
    int M2 = 25;
    std::optional<double> T;
    std::optional<double> nu;
    std::string out = "fracstep-out";
    std::string mode = "table";  // table | audit | recurrence | truncation
    int jobs = 1;
    // custom example only
    std::string reaction = "logistic";  // allen-cahn | logistic | none | linear:<c>
    std::string initial = "sine";       // sine | zero
};

/// Grading label -> numeric r for one alpha.
inline double resolve_grading(const std::string& label, double alpha) {
    if (label == "2/alpha") return 2.0 / alpha;
    std::size_t used = 0;
    double r = 0.0;
    try {
        r = std::stod(label, &used);
    } catch (const std::exception&) {
        throw ConfigError("r", "cannot parse grading '" + label + "'");
    }
    if (used != label.size()) throw ConfigError("r", "cannot parse grading '" + label + "'");
    return r;
}

inline Reaction parse_reaction(const std::string& name) {
    if (name == "allen-cahn") return Reaction::allen_cahn();
    if (name == "logistic") return Reaction::logistic();
    if (name == "none") return Reaction::none();
    if (name.rfind("linear:", 0) == 0) {
        const std::string c = name.substr(7);
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(c, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != c.size()) throw ConfigError("reaction", "bad coefficient in '" + name + "'");
        return Reaction::linear(v);
    }
    throw ConfigError("reaction", "unknown reaction '" + name + "'");
}

inline void validate_config(const ExperimentConfig& c) {
    if (c.example != "1" && c.example != "2" && c.example != "custom") {
        throw ConfigError("example", "expected 1, 2 or custom, got '" + c.example + "'");
    }
    const auto& m = c.mode;
    if (m != "table" && m != "audit" && m != "recurrence" && m != "truncation") {
        throw ConfigError("mode", "expected table, audit, recurrence or truncation, got '" + m + "'");
    }
    if (c.alphas.empty()) throw ConfigError("alpha", "list is empty");
    for (double a : c.alphas)
        if (!(a > 0.0 && a < 1.0)) throw ConfigError("alpha", "values must lie in (0,1)");
    if (c.gradings.empty()) throw ConfigError("r", "list is empty");
    for (const auto& g : c.gradings)
        for (double a : c.alphas)
            if (!(resolve_grading(g, a) >= 1.0)) throw ConfigError("r", "grading '" + g + "' is below 1");
    if (c.Ns.empty()) throw ConfigError("N", "list is empty");
    for (int n : c.Ns)
        if (n < 1) throw ConfigError("N", "step counts must be positive");
    if (m == "table" || m == "truncation") {
        for (std::size_t k = 1; k < c.Ns.size(); ++k)
            if (c.Ns[k] != 2 * c.Ns[k - 1]) throw ConfigError("N", "values must double for rate fitting");
    }
    if (c.M1 < 2) throw ConfigError("M1", "need at least 2 cells");
    if (c.M2 < 2) throw ConfigError("M2", "need at least 2 cells");
    if (c.T && !(*c.T > 0.0)) throw ConfigError("T", "must be positive");
    if (c.nu && !(*c.nu > 0.0)) throw ConfigError("nu", "must be positive");
    if (c.jobs < 1) throw ConfigError("jobs", "must be at least 1");
    if (c.out.empty()) throw ConfigError("out", "output directory is empty");
    if (c.example == "custom") {
        parse_reaction(c.reaction);
        if (c.initial != "sine" && c.initial != "zero") {
            throw ConfigError("initial", "expected sine or zero, got '" + c.initial + "'");
        }
    }
}

/// Problem for one (alpha, r, N) cell.
inline ProblemSpec make_problem(const ExperimentConfig& c, double alpha, double r, int N) {
    ProblemSpec s;
    if (c.example == "1") {
        s = example1(alpha, r, N, c.M1, c.T.value_or(0.5), c.nu.value_or(0.1));
    } else if (c.example == "2") {
        s = example2(alpha, r, N, c.M1, c.T.value_or(0.5), c.nu.value_or(0.3));
    } else {
        s.name = "custom";
        s.alpha = alpha;
        s.r = r;
        s.N = N;
        s.T = c.T.value_or(0.5);
        s.nu = c.nu.value_or(0.3);
        s.reaction = parse_reaction(c.reaction);
        if (c.initial == "sine") {
            s.initial = [](double x, double y) { return std::sin(std::numbers::pi * x) * std::sin(std::numbers::pi * y); };
            s.initial_label = "sin(pi x)sin(pi y)";
        }
    }
    s.M1 = c.M1;
    s.M2 = c.M2;
    return s;
}

/// Runs task(i) for i in [0, count) on `jobs` threads; exceptions stay per task.
inline void run_pool(std::size_t count, int jobs, const std::function<void(std::size_t)>& task) {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++) task(i);
    };
    const int n = std::max(1, std::min<int>(jobs, static_cast<int>(count)));
    if (n == 1) {
        worker();
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(n);
    for (int k = 0; k < n; ++k) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
}

struct ExperimentResult {
    ExitCode code = ExitCode::Ok;
    std::vector<std::string> files;  // relative to the output directory
    std::vector<std::string> log;    // sidecar lines, without timestamps
};

namespace detail {

inline std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

inline std::string sci(double v) { return fmt("%.4e", v); }
inline std::string fixed4(double v) { return fmt("%.4f", v); }
inline std::string num(double v) { return fmt("%.17g", v); }

inline std::string file_label(const std::string& g) {
    std::string s;
    for (char ch : g) s += (ch == '/') ? std::string("_over_") : std::string(1, ch);
    return s;
}

inline void write_file(const std::filesystem::path& dir, const std::string& name, const std::string& body,
                       ExperimentResult& res) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
    f << body;
    res.files.push_back(name);
}

struct Cell {
    double alpha = 0.0;
    double r = 0.0;
    int N = 0;
    bool ok = false;
    std::string error;
    std::string hash;
    double E_L = 0.0, E_G = 0.0;  // exact-solution errors (example 1)
    GridFunction2D final;         // two-mesh examples
    std::vector<std::string> warnings;
};

inline void run_table(const ExperimentConfig& c, const std::filesystem::path& dir, ExperimentResult& res) {
    const bool exact = c.example == "1";
    for (const auto& g : c.gradings) {
        std::vector<Cell> cells;
        for (double a : c.alphas) {
            std::vector<int> Ns = c.Ns;
            if (!exact) Ns.push_back(2 * c.Ns.back());
            for (int N : Ns) {
                Cell cell;
                cell.alpha = a;
                cell.r = resolve_grading(g, a);
                cell.N = N;
                cells.push_back(std::move(cell));
            }
        }
        run_pool(cells.size(), c.jobs, [&](std::size_t i) {
            Cell& cell = cells[i];
            try {
                const ProblemSpec spec = make_problem(c, cell.alpha, cell.r, cell.N);
                cell.hash = spec.hash_hex();
                const Solution sol = march(spec);
                cell.warnings = sol.warnings;
                if (exact) {
                    const ErrorSeries es = error_series(sol, spec);
                    cell.E_L = es.local;
                    cell.E_G = es.global;
                } else {
                    cell.final = sol.final();
                }
                cell.ok = true;
            } catch (const std::exception& e) {
                cell.error = e.what();
            }
        });

        const SpatialGrid grid = build_spatial_grid(1.0, 1.0, c.M1, c.M2);
        const double h2_floor = grid.h1 * grid.h1 + grid.h2 * grid.h2;
        std::ostringstream csv, txt;
        csv << "alpha,r,N,M,E_L,rate_L,E_G,rate_G,expected_local,expected_global,spec_hash,h2_floor\n";
        txt << "example " << c.example << ", r = " << g << ", M1 = " << c.M1 << ", M2 = " << c.M2 << "\n";
        char head[64];
        std::snprintf(head, sizeof head, "%-22s", "N");
        txt << head;
        for (int N : c.Ns) {
            std::snprintf(head, sizeof head, "%12d", N);
            txt << head;
        }
        txt << "   expected\n";

        auto find = [&](double a, int N) -> const Cell& {
            for (const auto& cell : cells)
                if (cell.alpha == a && cell.N == N) return cell;
            throw std::logic_error("missing cell");
        };
        for (double a : c.alphas) {
            const double r = resolve_grading(g, a);
            std::vector<double> EL, EG;
            std::vector<bool> ok;
            for (int N : c.Ns) {
                const Cell& cell = find(a, N);
                bool good = cell.ok;
                double el = cell.E_L;
                if (good && !exact) {
                    const Cell& fine = find(a, 2 * N);
                    good = fine.ok;
                    if (good) el = l2_norm(difference(cell.final, fine.final));
                }
                EL.push_back(el);
                EG.push_back(cell.E_G);
                ok.push_back(good);
                for (const auto& w : cell.warnings) res.log.push_back("alpha=" + num(a) + " r=" + g + " N=" +
                                                                      std::to_string(N) + ": " + w);
            }
            for (const auto& cell : cells) {
                if (cell.alpha == a && !cell.ok) {
                    res.code = ExitCode::NumericalFailure;
                    res.log.push_back("FAILED alpha=" + num(a) + " r=" + g + " N=" + std::to_string(cell.N) + ": " +
                                      cell.error);
                }
            }
            auto rates = [&](const std::vector<double>& E) {
                std::vector<std::optional<double>> out(E.size());
                for (std::size_t k = 1; k < E.size(); ++k)
                    if (ok[k] && ok[k - 1] && E[k] > 0.0 && E[k - 1] > 0.0) out[k] = std::log2(E[k - 1] / E[k]);
                return out;
            };
            const auto rl = rates(EL);
            const auto rg = rates(EG);
            const double exp_l = expected_local_order(a, r), exp_g = expected_global_order(a, r);
            for (std::size_t k = 0; k < c.Ns.size(); ++k) {
                const Cell& cell = find(a, c.Ns[k]);
                csv << num(a) << ',' << num(r) << ',' << c.Ns[k] << ',' << c.M1 << ',';
                csv << (ok[k] ? sci(EL[k]) : "failed") << ',' << (rl[k] ? fixed4(*rl[k]) : "") << ',';
                if (exact) {
                    csv << (ok[k] ? sci(EG[k]) : "failed") << ',' << (rg[k] ? fixed4(*rg[k]) : "");
                } else {
                    csv << ',';
                }
                csv << ',' << fixed4(exp_l) << ',' << (exact ? fixed4(exp_g) : "") << ',' << cell.hash << ','
                    << sci(h2_floor) << '\n';
            }
            auto row = [&](const std::string& label, const std::vector<double>& E,
                           const std::vector<std::optional<double>>& rr, double expected) {
                char buf[64];
                std::snprintf(buf, sizeof buf, "%-22s", label.c_str());
                txt << buf;
                for (std::size_t k = 0; k < E.size(); ++k) {
                    std::snprintf(buf, sizeof buf, "%12s", ok[k] ? sci(E[k]).c_str() : "failed");
                    txt << buf;
                }
                txt << '\n';
                std::snprintf(buf, sizeof buf, "%-22s", "");
                txt << buf;
                for (std::size_t k = 0; k < E.size(); ++k) {
                    std::snprintf(buf, sizeof buf, "%12s", rr[k] ? fixed4(*rr[k]).c_str() : "");
                    txt << buf;
                }
                std::snprintf(buf, sizeof buf, "   %.4g\n", expected);
                txt << buf;
            };
            row("E_L alpha=" + fmt("%g", a), EL, rl, exp_l);
            if (exact) row("E_G alpha=" + fmt("%g", a), EG, rg, exp_g);
        }
        const std::string base = "example" + c.example + "_r" + file_label(g);
        write_file(dir, base + ".csv", csv.str(), res);
        write_file(dir, base + ".txt", txt.str(), res);
    }
}

inline double quadratic_exactness_error(const TemporalMesh& mesh, const SchemeParams& p, int n_max) {
    std::vector<double> u(mesh.N() + 1);
    for (int j = 0; j <= mesh.N(); ++j) u[j] = mesh.t(j) * mesh.t(j);
    double worst = 0.0;
    for (int n = 1; n <= n_max; ++n) {
        const AlikhanovWeights w = assemble_weights(n, mesh, p);
        const double approx = apply_discrete_derivative(w, std::span<const double>(u.data(), n + 1));
        const double exact = 2.0 * std::pow(star_point(mesh, n, p.sigma), 2.0 - p.alpha) / std::tgamma(3.0 - p.alpha);
        worst = std::max(worst, std::abs(approx - exact));
    }
    return worst;
}

inline double dual_path_error(const TemporalMesh& mesh, const SchemeParams& p, int n_max) {
    double worst = 0.0;
    for (int n = 1; n <= n_max; ++n) {
        const AlikhanovWeights a = assemble_weights(n, mesh, p, WeightMethod::ClosedForm);
        const AlikhanovWeights b = assemble_weights(n, mesh, p, WeightMethod::Quadrature);
        for (int j = 0; j < n; ++j) worst = std::max(worst, std::abs(a.g[j] - b.g[j]) / std::abs(a.g[j]));
    }
    return worst;
}

inline void run_audit(const ExperimentConfig& c, const std::filesystem::path& dir, ExperimentResult& res) {
    struct Row {
        double alpha, r;
        std::string label;
        int N;
        PropertyReport rep;
        double quad = 0.0, dual = 0.0;
        std::string error;
    };
    std::vector<Row> rows;
    for (double a : c.alphas)
        for (const auto& g : c.gradings)
            for (int N : c.Ns) rows.push_back({a, resolve_grading(g, a), g, N, {}, 0.0, 0.0, {}});
    const double T = c.T.value_or(0.5);
    run_pool(rows.size(), c.jobs, [&](std::size_t i) {
        Row& row = rows[i];
        try {
            const TemporalMesh mesh = build_graded_mesh(T, row.N, row.r);
            const SchemeParams p = SchemeParams::alikhanov(row.alpha);
            row.rep = audit_properties(mesh, p, row.N);
            row.quad = quadratic_exactness_error(mesh, p, row.N);
            row.dual = dual_path_error(mesh, p, std::min(row.N, 256));
        } catch (const std::exception& e) {
            row.error = e.what();
        }
    });
    std::ostringstream csv;
    csv << "alpha,r,N,hypotheses,P1,P1_margin,P1_unresolved,P2,P2_margin,P3,P3_margin,P4,P4_margin,"
           "quadratic_error,dual_path_rel\n";
    auto flag = [](const PropertyCheck& pc) { return !pc.evaluated ? "skipped" : (pc.pass ? "pass" : "FAIL"); };
    for (const auto& row : rows) {
        const auto& rep = row.rep;
        if (!row.error.empty()) {
            res.code = ExitCode::NumericalFailure;
            res.log.push_back("FAILED audit alpha=" + num(row.alpha) + " r=" + row.label + " N=" +
                              std::to_string(row.N) + ": " + row.error);
            continue;
        }
        if (!rep.all_pass()) {
            res.code = ExitCode::NumericalFailure;
            res.log.push_back("audit failure alpha=" + num(row.alpha) + " r=" + row.label + " N=" +
                              std::to_string(row.N));
        }
        csv << num(row.alpha) << ',' << num(row.r) << ',' << row.N << ',' << (rep.hypotheses_ok ? "pass" : "FAIL")
            << ',' << flag(rep.p1) << ',' << sci(rep.p1.worst_margin) << ',' << rep.p1.unresolved << ','
            << flag(rep.p2) << ',' << sci(rep.p2.worst_margin) << ',' << flag(rep.p3) << ','
            << sci(rep.p3.worst_margin) << ',' << flag(rep.p4) << ',' << sci(rep.p4.worst_margin) << ','
            << sci(row.quad) << ',' << sci(row.dual) << '\n';
    }
    write_file(dir, "audit.csv", csv.str(), res);
}

inline void run_recurrence(const ExperimentConfig& c, const std::filesystem::path& dir, ExperimentResult& res) {
    struct Case {
        double alpha, r;
        std::string label;
        int N;
        double gamma, l1, l2;
        bool admissible = false;
        RecurrenceResult out;
        TemporalMesh mesh = TemporalMesh::graded(1.0, 1, 1.0);
        std::string error;
    };
    std::vector<Case> cases;
    const double T = c.T.value_or(0.5);
    for (double a : c.alphas)
        for (const auto& g : c.gradings)
            for (double gamma : {a - 1.0, -0.5, 0.5})
                for (double l1 : {0.0, 0.5})
                    for (double l2 : {0.0, 0.5})
                        for (int N : c.Ns) {
                            const double r = resolve_grading(g, a);
                            cases.push_back({a, r, g, N, gamma, l1, l2, recurrence_admissible(a, r, gamma), {},
                                             TemporalMesh::graded(1.0, 1, 1.0), {}});
                        }
    run_pool(cases.size(), c.jobs, [&](std::size_t i) {
        Case& k = cases[i];
        if (!k.admissible) return;
        try {
            k.mesh = build_graded_mesh(T, k.N, k.r);
            RecurrenceSpec spec{k.gamma, k.l1, k.l2, k.mesh, SchemeParams::alikhanov(k.alpha)};
            k.out = solve_scalar_recurrence(spec);
        } catch (const std::exception& e) {
            k.error = e.what();
        }
    });
    std::filesystem::create_directories(dir / "recurrence");
    std::ostringstream csv;
    csv << "alpha,r,N,gamma,lambda1,lambda2,admissible,fitted_constant,argmax,note\n";
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const Case& k = cases[i];
        csv << num(k.alpha) << ',' << num(k.r) << ',' << k.N << ',' << num(k.gamma) << ',' << num(k.l1) << ','
            << num(k.l2) << ',' << (k.admissible ? "yes" : "no") << ',';
        if (!k.admissible) {
            csv << ",,outside the bound's (r, gamma) range\n";
            continue;
        }
        if (!k.error.empty()) {
            csv << ",," << '"' << k.error << '"' << '\n';
            res.log.push_back("recurrence refused: " + k.error);
            continue;
        }
        csv << sci(k.out.fitted_constant) << ',' << k.out.argmax << ",\n";
        char name[160];
        std::snprintf(name, sizeof name, "recurrence/a%g_r%s_g%g_l%g_m%g_N%d.csv", k.alpha,
                      file_label(k.label).c_str(), k.gamma, k.l1, k.l2, k.N);
        std::ostringstream lab;
        write_recurrence_csv(lab, k.mesh, k.out);
        write_file(dir, name, lab.str(), res);
    }
    write_file(dir, "recurrence.csv", csv.str(), res);
}

inline void run_truncation(const ExperimentConfig& c, const std::filesystem::path& dir, ExperimentResult& res) {
    struct Job {
        double alpha, r;
        std::string label;
        int N;
        std::vector<std::pair<std::string, TruncationFit>> fits;
        std::string error;
    };
    std::vector<Job> jobs;
    for (double a : c.alphas)
        for (const auto& g : c.gradings)
            for (int N : c.Ns) jobs.push_back({a, resolve_grading(g, a), g, N, {}, {}});
    const double T = c.T.value_or(0.5);
    run_pool(jobs.size(), c.jobs, [&](std::size_t i) {
        Job& j = jobs[i];
        try {
            j.fits.emplace_back("r1(beta=alpha)", truncation_r1_oracle(j.alpha, j.r, j.N, j.alpha, T));
            j.fits.emplace_back("r1(beta=1)", truncation_r1_oracle(j.alpha, j.r, j.N, 1.0, T));
            j.fits.emplace_back("r1(beta=2)", truncation_r1_oracle(j.alpha, j.r, j.N, 2.0, T));
            ExperimentConfig ex1 = c;
            ex1.example = "1";
            const NonlinearTruncationFit f = truncation_r3_study(make_problem(ex1, j.alpha, j.r, j.N));
            j.fits.emplace_back("r3", f.r3);
            j.fits.emplace_back("r2", f.r2);
            j.fits.emplace_back("r2_time", f.r2_time);
            j.fits.emplace_back("r2_space", f.r2_space);
        } catch (const std::exception& e) {
            j.error = e.what();
        }
    });
    std::ostringstream csv;
    csv << "alpha,r,N,residual,max_abs,fitted_constant\n";
    for (const auto& j : jobs) {
        if (!j.error.empty()) {
            res.code = ExitCode::NumericalFailure;
            res.log.push_back("FAILED truncation alpha=" + num(j.alpha) + " N=" + std::to_string(j.N) + ": " +
                              j.error);
            continue;
        }
        for (const auto& [name, fit] : j.fits) {
            csv << num(j.alpha) << ',' << num(j.r) << ',' << j.N << ',' << name << ',' << sci(fit.max_abs) << ','
                << sci(fit.fitted_constant) << '\n';
        }
    }
    write_file(dir, "truncation.csv", csv.str(), res);
}

inline std::string timestamp() {
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return buf;
}

}  // namespace detail

/**
 * Runs one experiment and writes its artifacts under cfg.out. CSV and table
 * files are deterministic; timestamps and warnings go to run.log.
 */
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    validate_config(cfg);
    const std::filesystem::path dir(cfg.out);
    try {
        std::filesystem::create_directories(dir);
    } catch (const std::filesystem::filesystem_error& e) {
        throw ConfigError("out", std::string("cannot create output directory: ") + e.what());
    }
    const std::string started = detail::timestamp();
    const auto t0 = std::chrono::steady_clock::now();

    ExperimentResult res;
    if (cfg.mode == "table") {
        detail::run_table(cfg, dir, res);
    } else if (cfg.mode == "audit") {
        detail::run_audit(cfg, dir, res);
    } else if (cfg.mode == "recurrence") {
        detail::run_recurrence(cfg, dir, res);
    } else {
        detail::run_truncation(cfg, dir, res);
    }

    std::ofstream log(dir / "run.log", std::ios::app);
    log << "start " << started << " mode=" << cfg.mode << " example=" << cfg.example << " jobs=" << cfg.jobs << '\n';
    for (const auto& line : res.log) log << "  " << line << '\n';
    for (const auto& f : res.files) log << "  wrote " << f << '\n';
    log << "end " << detail::timestamp() << " elapsed="
        << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
        << "s exit=" << static_cast<int>(res.code) << '\n';
    return res;
}

}  // namespace fracstep
