#include "cpl/lawfit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include <Eigen/Dense>

#include "cpl/errors.hpp"

namespace cpl {

bool Scope::contains(const RunConfig& config) const {
    return config.source == source && (!optimizer || config.optimizer == *optimizer);
}

std::string Scope::label() const { return optimizer ? source + "." + *optimizer : source; }

double PowerLawFit::optimal_lr(double N, double D) const { return c * std::pow(N, alpha_lr) * std::pow(D, beta_lr); }

double PowerLawFit::optimal_batch(double D) const { return d * std::pow(D, gamma_bs); }

std::vector<FrontierPoint> select_best_per_group(std::span<const RunRecord> runs, const Scope& scope) {
    std::map<SizeKey, const RunRecord*> best;
    for (const auto& run : runs) {
        if (!scope.contains(run.config)) continue;
        auto [it, inserted] = best.try_emplace(size_key(run.config), &run);
        if (inserted) continue;
        const RunRecord* cur = it->second;
        if (run.final_loss < cur->final_loss || (run.final_loss == cur->final_loss && run.run_id < cur->run_id)) {
            it->second = &run;
        }
    }
    std::vector<FrontierPoint> points;
    points.reserve(best.size());
    for (const auto& [key, run] : best) {
        points.push_back({run->config.model_size_N, run->config.data_size_D, run->final_loss, run->config, run->run_id});
    }
    return points;
}

double chinchilla_log_prediction(const ChinchillaParams& p, double N, double D) {
    const double terms[3] = {p[0], p[1] - p[3] * std::log(N), p[2] - p[4] * std::log(D)};
    const double top = std::max({terms[0], terms[1], terms[2]});
    return top + std::log(std::exp(terms[0] - top) + std::exp(terms[1] - top) + std::exp(terms[2] - top));
}

double chinchilla_objective(const ChinchillaParams& p, std::span<const FrontierPoint> points, double delta) {
    if (!(p[3] > 0.0) || !(p[4] > 0.0)) return std::numeric_limits<double>::infinity();
    double total = 0.0;
    for (const auto& pt : points) {
        const double r = chinchilla_log_prediction(p, pt.N, pt.D) - std::log(pt.best_loss);
        const double a = std::abs(r);
        total += a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
    }
    return std::isfinite(total) ? total : std::numeric_limits<double>::infinity();
}

namespace {

std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> out;
    for (int i = 0; i < n; ++i) out.push_back(n == 1 ? lo : lo + (hi - lo) * i / (n - 1));
    return out;
}

void check_points(std::span<const FrontierPoint> points, std::size_t minimum, const char* what) {
    if (points.size() < minimum) {
        throw FitError(std::string(what) + ": need at least " + std::to_string(minimum) + " points, got " +
                       std::to_string(points.size()));
    }
    std::set<double> ns, ds;
    for (const auto& p : points) {
        if (!(p.N > 0.0) || !(p.D > 0.0)) throw FitError(std::string(what) + ": N and D must be positive");
        ns.insert(p.N);
        ds.insert(p.D);
    }
    if (ns.size() < 2 || ds.size() < 2) {
        throw FitError(std::string(what) + ": degenerate points (need at least 2 distinct N and 2 distinct D)");
    }
}

}  // namespace

std::vector<ChinchillaParams> chinchilla_grid(std::span<const FrontierPoint> points, const ChinchillaFitOptions& opts) {
    double min_loss = std::numeric_limits<double>::infinity(), max_loss = 0.0, max_n = 0.0, max_d = 0.0;
    for (const auto& p : points) {
        min_loss = std::min(min_loss, p.best_loss);
        max_loss = std::max(max_loss, p.best_loss);
        max_n = std::max(max_n, p.N);
        max_d = std::max(max_d, p.D);
    }
    const double top_exp = *std::max_element(opts.exponent_grid.begin(), opts.exponent_grid.end());
    std::vector<double> e_grid;
    for (double f : linspace(0.1, 0.9, opts.coefficient_grid)) e_grid.push_back(std::log(f * min_loss));
    const auto a_grid = linspace(0.0, std::log(max_loss) + top_exp * std::log(std::max(max_n, 1.0)) + 1.0,
                                 opts.coefficient_grid);
    const auto b_grid = linspace(0.0, std::log(max_loss) + top_exp * std::log(std::max(max_d, 1.0)) + 1.0,
                                 opts.coefficient_grid);
    std::vector<ChinchillaParams> grid;
    for (double e : e_grid)
        for (double a : a_grid)
            for (double b : b_grid)
                for (double al : opts.exponent_grid)
                    for (double be : opts.exponent_grid) grid.push_back({e, a, b, al, be});
    return grid;
}

NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& f, std::vector<double> x0,
                             const NelderMeadOptions& opts) {
    const std::size_t n = x0.size();
    std::vector<std::vector<double>> simplex(n + 1, x0);
    for (std::size_t i = 0; i < n; ++i) {
        const double step = i < opts.initial_step.size() ? opts.initial_step[i] : 0.1;
        simplex[i + 1][i] += step;
    }
    std::vector<double> values(n + 1);
    int evals = 0;
    auto eval = [&](const std::vector<double>& x) {
        ++evals;
        return f(x);
    };
    for (std::size_t i = 0; i <= n; ++i) values[i] = eval(simplex[i]);

    std::vector<std::size_t> order(n + 1);
    std::vector<double> centroid(n), trial(n), trial2(n);
    while (evals < opts.max_evaluations) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
        const std::size_t best = order.front(), worst = order.back(), second = order[n - 1];

        double xspread = 0.0;
        for (std::size_t i = 0; i <= n; ++i)
            for (std::size_t k = 0; k < n; ++k) xspread = std::max(xspread, std::abs(simplex[i][k] - simplex[best][k]));
        if (std::isfinite(values[worst]) && values[worst] - values[best] <= opts.tolerance && xspread <= 1e-10) break;

        std::fill(centroid.begin(), centroid.end(), 0.0);
        for (std::size_t i = 0; i <= n; ++i) {
            if (i == worst) continue;
            for (std::size_t k = 0; k < n; ++k) centroid[k] += simplex[i][k] / static_cast<double>(n);
        }
        auto along = [&](double t, std::vector<double>& out) {
            for (std::size_t k = 0; k < n; ++k) out[k] = centroid[k] + t * (simplex[worst][k] - centroid[k]);
        };

        along(-1.0, trial);
        const double fr = eval(trial);
        if (fr < values[best]) {
            along(-2.0, trial2);
            const double fe = eval(trial2);
            if (fe < fr) {
                simplex[worst] = trial2;
                values[worst] = fe;
            } else {
                simplex[worst] = trial;
                values[worst] = fr;
            }
            continue;
        }
        if (fr < values[second]) {
            simplex[worst] = trial;
            values[worst] = fr;
            continue;
        }
        // Contraction: outside if the reflection improved on the worst point.
        const bool outside = fr < values[worst];
        along(outside ? -0.5 : 0.5, trial2);
        const double fc = eval(trial2);
        if (fc < (outside ? fr : values[worst])) {
            simplex[worst] = trial2;
            values[worst] = fc;
            continue;
        }
        for (std::size_t i = 0; i <= n; ++i) {
            if (i == best) continue;
            for (std::size_t k = 0; k < n; ++k) simplex[i][k] = simplex[best][k] + 0.5 * (simplex[i][k] - simplex[best][k]);
            values[i] = eval(simplex[i]);
        }
    }
    const auto best = static_cast<std::size_t>(std::min_element(values.begin(), values.end()) - values.begin());
    return {simplex[best], values[best], evals};
}

ChinchillaFit fit_chinchilla(std::span<const FrontierPoint> points, const ChinchillaFitOptions& opts) {
    check_points(points, 5, "fit_chinchilla");
    for (const auto& p : points) {
        if (!(p.best_loss > 0.0) || !std::isfinite(p.best_loss)) throw FitError("fit_chinchilla: losses must be positive");
    }

    const auto grid = chinchilla_grid(points, opts);
    std::vector<double> start_values(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) start_values[i] = chinchilla_objective(grid[i], points, opts.huber_delta);

    std::vector<std::size_t> order(grid.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return start_values[a] < start_values[b]; });
    const std::size_t descents = opts.descents == 0 ? grid.size() : std::min(opts.descents, grid.size());

    auto objective = [&](std::span<const double> x) {
        return chinchilla_objective({x[0], x[1], x[2], x[3], x[4]}, points, opts.huber_delta);
    };
    NelderMeadOptions nm{opts.max_evaluations, opts.tolerance, {0.25, 0.5, 0.5, 0.05, 0.05}};

    std::vector<double> best_x;
    double best_value = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < descents; ++k) {
        const auto& start = grid[order[k]];
        if (!std::isfinite(start_values[order[k]])) continue;
        auto result = nelder_mead(objective, {start.begin(), start.end()}, nm);
        // Strict comparison keeps the earliest start on ties.
        if (result.value < best_value) {
            best_value = result.value;
            best_x = result.x;
        }
    }
    if (best_x.empty()) throw FitError("fit_chinchilla: objective is non-finite at every start");

    // Restarting from the optimum guards against a collapsed simplex.
    nm.initial_step = {0.05, 0.1, 0.1, 0.01, 0.01};
    for (int restart = 0; restart < 3; ++restart) {
        auto result = nelder_mead(objective, best_x, nm);
        if (!(result.value < best_value)) break;
        best_value = result.value;
        best_x = result.x;
    }

    ChinchillaFit fit;
    fit.E = std::exp(best_x[0]);
    fit.A = std::exp(best_x[1]);
    fit.B = std::exp(best_x[2]);
    fit.alpha = best_x[3];
    fit.beta = best_x[4];
    fit.objective = best_value;
    fit.points = points.size();
    if (!points.empty()) {
        fit.scope.source = points.front().best_config.source;
    }
    return fit;
}

double predict_chinchilla(const ChinchillaFit& fit, double N, double D) {
    if (!(N > 0.0) || !(D > 0.0)) throw ArgumentError("predict_chinchilla: N and D must be positive");
    return fit.E + fit.A * std::pow(N, -fit.alpha) + fit.B * std::pow(D, -fit.beta);
}

double residual_target(double loss, const ChinchillaFit& fit, double N, double D) {
    return loss - predict_chinchilla(fit, N, D);
}

PowerLawFit fit_power_law(std::span<const FrontierPoint> frontier) {
    check_points(frontier, 3, "fit_power_law");
    const auto n = static_cast<Eigen::Index>(frontier.size());
    Eigen::MatrixXd lr_design(n, 3), bs_design(n, 2);
    Eigen::VectorXd log_lr(n), log_bs(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& p = frontier[static_cast<std::size_t>(i)];
        if (!(p.best_config.peak_lr > 0.0) || !(p.best_config.batch_size > 0.0)) {
            throw FitError("fit_power_law: frontier configs need positive peak_lr and batch_size");
        }
        lr_design.row(i) << 1.0, std::log(p.N), std::log(p.D);
        bs_design.row(i) << 1.0, std::log(p.D);
        log_lr(i) = std::log(p.best_config.peak_lr);
        log_bs(i) = std::log(p.best_config.batch_size);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> lr_qr(lr_design);
    lr_qr.setThreshold(1e-10);
    if (lr_qr.rank() < 3) throw FitError("fit_power_law: rank-deficient design (log N and log D are collinear)");
    const Eigen::VectorXd lr_coef = lr_qr.solve(log_lr);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> bs_qr(bs_design);
    bs_qr.setThreshold(1e-10);
    if (bs_qr.rank() < 2) throw FitError("fit_power_law: rank-deficient batch-size design");
    const Eigen::VectorXd bs_coef = bs_qr.solve(log_bs);

    PowerLawFit fit;
    fit.c = std::exp(lr_coef(0));
    fit.alpha_lr = lr_coef(1);
    fit.beta_lr = lr_coef(2);
    fit.d = std::exp(bs_coef(0));
    fit.gamma_bs = bs_coef(1);
    fit.scope.source = frontier.front().best_config.source;
    return fit;
}

const ChinchillaFit& BaselineSet::lookup(const RunConfig& config) const {
    if (auto it = fits_.find(Scope{config.source, config.optimizer}); it != fits_.end()) return it->second;
    if (auto it = fits_.find(Scope{config.source, std::nullopt}); it != fits_.end()) return it->second;
    throw ScopeError("no baseline fitted for source '" + config.source + "' (optimizer '" + config.optimizer + "')");
}

double BaselineSet::predict(const RunConfig& config) const {
    return predict_chinchilla(lookup(config), config.model_size_N, config.data_size_D);
}

BaselineSet fit_baselines(std::span<const RunRecord> runs, bool per_optimizer, const ChinchillaFitOptions& opts) {
    std::set<Scope> scopes;
    for (const auto& r : runs) {
        scopes.insert(per_optimizer ? Scope{r.config.source, r.config.optimizer} : Scope{r.config.source, std::nullopt});
    }
    BaselineSet set;
    for (const auto& scope : scopes) {
        const auto frontier = select_best_per_group(runs, scope);
        ChinchillaFit fit = fit_chinchilla(frontier, opts);
        fit.scope = scope;
        set.add(fit);
    }
    return set;
}

namespace {

std::string exact(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::string format_fit(const ChinchillaFit& fit) {
    std::ostringstream out;
    out << "# chinchilla fit: loss = E + A / N^alpha + B / D^beta (N in millions, D in billions)\n"
        << "scope_source " << fit.scope.source << "\n"
        << "scope_optimizer " << fit.scope.optimizer.value_or("*") << "\n"
        << "E " << exact(fit.E) << "\nA " << exact(fit.A) << "\nB " << exact(fit.B) << "\nalpha " << exact(fit.alpha)
        << "\nbeta " << exact(fit.beta) << "\nobjective " << exact(fit.objective) << "\npoints " << fit.points << "\n";
    return out.str();
}

ChinchillaFit parse_chinchilla_fit(const std::string& text) {
    ChinchillaFit fit;
    std::istringstream in(text);
    std::string line;
    int seen = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream fields(line);
        std::string key, value;
        fields >> key >> value;
        if (key == "scope_source") fit.scope.source = value;
        else if (key == "scope_optimizer") fit.scope.optimizer = value == "*" ? std::nullopt : std::optional(value);
        else if (key == "E") fit.E = std::stod(value), ++seen;
        else if (key == "A") fit.A = std::stod(value), ++seen;
        else if (key == "B") fit.B = std::stod(value), ++seen;
        else if (key == "alpha") fit.alpha = std::stod(value), ++seen;
        else if (key == "beta") fit.beta = std::stod(value), ++seen;
        else if (key == "objective") fit.objective = std::stod(value);
        else if (key == "points") fit.points = std::stoul(value);
    }
    if (seen != 5) throw FormatError("chinchilla fit file is missing parameters");
    return fit;
}

std::string format_fit(const PowerLawFit& fit) {
    std::ostringstream out;
    out << "# power law: lr = c N^alpha_lr D^beta_lr, batch = d D^gamma_bs\n"
        << "scope_source " << fit.scope.source << "\n"
        << "scope_optimizer " << fit.scope.optimizer.value_or("*") << "\n"
        << "c " << exact(fit.c) << "\nalpha_lr " << exact(fit.alpha_lr) << "\nbeta_lr " << exact(fit.beta_lr) << "\nd "
        << exact(fit.d) << "\ngamma_bs " << exact(fit.gamma_bs) << "\n";
    return out.str();
}

}  // namespace cpl
