#include "cpl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "cpl/errors.hpp"

namespace cpl {

std::vector<double> average_ranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

std::optional<double> spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ArgumentError("spearman: length mismatch");
    const auto ra = average_ranks(a), rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa <= 0.0 || sbb <= 0.0) return std::nullopt;
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

Metrics compute_metrics(std::span<const double> pred, std::span<const double> truth) {
    if (pred.size() != truth.size()) throw ArgumentError("compute_metrics: length mismatch");
    if (pred.empty()) throw ArgumentError("compute_metrics: no samples");
    Metrics m;
    m.n = pred.size();
    double abs_sum = 0, sq_sum = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double e = pred[i] - truth[i];
        abs_sum += std::abs(e);
        sq_sum += e * e;
    }
    m.mae = abs_sum / static_cast<double>(m.n);
    m.rmse = std::max(m.mae, std::sqrt(sq_sum / static_cast<double>(m.n)));
    m.spearman_rho = spearman(pred, truth);
    return m;
}

Metrics evaluate_split(const BatchPredictor& predictor, std::span<const RunRecord> split) {
    if (split.empty()) throw ArgumentError("evaluate_split: empty split");
    std::vector<RunConfig> configs;
    std::vector<double> truth;
    for (const auto& r : split) {
        configs.push_back(r.config);
        truth.push_back(r.final_loss);
    }
    const auto pred = predictor(configs);
    return compute_metrics(pred, truth);
}

std::string format_report(std::span<const ReportRow> rows) {
    std::vector<const ReportRow*> sorted;
    for (const auto& r : rows) sorted.push_back(&r);
    std::stable_sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) {
        return std::tie(a->dataset, a->split) < std::tie(b->dataset, b->split);
    });
    std::ostringstream out;
    out << "dataset\tsplit\tmethod\tn\tmae\trmse\tspearman\n";
    char buf[160];
    for (const auto* r : sorted) {
        std::string rho = "undefined";
        if (r->metrics.spearman_rho) {
            char rb[32];
            std::snprintf(rb, sizeof rb, "%.4f", *r->metrics.spearman_rho);
            rho = rb;
        }
        std::snprintf(buf, sizeof buf, "\t%zu\t%.4f\t%.4f\t", r->metrics.n, r->metrics.mae, r->metrics.rmse);
        out << r->dataset << '\t' << r->split << '\t' << r->method << buf << rho << '\n';
    }
    return out.str();
}

namespace {

double tps_kernel(double r2) { return r2 > 0.0 ? 0.5 * r2 * std::log(r2) : 0.0; }  // r² log r

}  // namespace

ThinPlateSpline::ThinPlateSpline(std::span<const double> x, std::span<const double> y, std::span<const double> z)
    : x_(x.begin(), x.end()), y_(y.begin(), y.end()) {
    const auto n = static_cast<Eigen::Index>(x.size());
    if (y.size() != x.size() || z.size() != x.size()) throw ArgumentError("thin-plate spline: length mismatch");
    if (n < 3) throw ArgumentError("thin-plate spline: need at least 3 points");
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n + 3, n + 3);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 3);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const double dx = x_[i] - x_[j], dy = y_[i] - y_[j];
            A(i, j) = tps_kernel(dx * dx + dy * dy);
        }
        A(i, n) = A(n, i) = 1.0;
        A(i, n + 1) = A(n + 1, i) = x_[i];
        A(i, n + 2) = A(n + 2, i) = y_[i];
        rhs(i) = z[i];
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    if (!lu.isInvertible()) throw ArgumentError("thin-plate spline: samples are collinear");
    const Eigen::VectorXd sol = lu.solve(rhs);
    w_.assign(sol.data(), sol.data() + n);
    a0_ = sol(n);
    ax_ = sol(n + 1);
    ay_ = sol(n + 2);
}

double ThinPlateSpline::operator()(double x, double y) const {
    double v = a0_ + ax_ * x + ay_ * y;
    for (std::size_t i = 0; i < w_.size(); ++i) {
        const double dx = x - x_[i], dy = y - y_[i];
        v += w_[i] * tps_kernel(dx * dx + dy * dy);
    }
    return v;
}

ContourGrid interpolate_surface(std::span<const SurfaceSample> samples, std::size_t resolution) {
    if (samples.size() < 4) throw ArgumentError("contour export: need at least 4 samples");
    if (resolution < 2) throw ArgumentError("contour export: resolution must be >= 2");
    std::map<std::pair<double, double>, double> unique;
    for (const auto& s : samples) {
        if (!(s.lr > 0.0) || !(s.batch > 0.0)) throw ArgumentError("contour export: lr and batch must be positive");
        auto [it, inserted] = unique.emplace(std::pair{s.lr, s.batch}, s.loss);
        if (!inserted && it->second != s.loss) {
            throw ArgumentError("contour export: conflicting losses at a duplicate (lr, batch)");
        }
    }
    std::vector<double> x, y, z;
    for (const auto& [k, v] : unique) {
        x.push_back(std::log(k.first));
        y.push_back(std::log(k.second));
        z.push_back(v);
    }
    const ThinPlateSpline tps(x, y, z);
    ContourGrid grid;
    const auto [xlo, xhi] = std::minmax_element(x.begin(), x.end());
    const auto [ylo, yhi] = std::minmax_element(y.begin(), y.end());
    for (std::size_t i = 0; i < resolution; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(resolution - 1);
        grid.log_lr.push_back(*xlo + t * (*xhi - *xlo));
        grid.log_batch.push_back(*ylo + t * (*yhi - *ylo));
    }
    grid.z.resize(resolution * resolution);
    for (std::size_t iy = 0; iy < resolution; ++iy) {
        for (std::size_t ix = 0; ix < resolution; ++ix) {
            grid.z[iy * resolution + ix] = tps(grid.log_lr[ix], grid.log_batch[iy]);
        }
    }
    return grid;
}

ContourGrid gaussian_blur(const ContourGrid& grid, double sigma) {
    if (sigma < 0.0) throw ArgumentError("gaussian blur: sigma must be non-negative");
    if (sigma == 0.0) return grid;
    const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
    std::vector<double> kernel;
    for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
        kernel.push_back(std::exp(-0.5 * static_cast<double>(k * k) / (sigma * sigma)));
    }
    const auto nx = static_cast<std::ptrdiff_t>(grid.log_lr.size());
    const auto ny = static_cast<std::ptrdiff_t>(grid.log_batch.size());
    // Separable pass with the kernel renormalized over in-bounds taps, so constants survive at the edges.
    auto pass = [&](const std::vector<double>& in, bool along_x) {
        std::vector<double> out(in.size());
        for (std::ptrdiff_t iy = 0; iy < ny; ++iy) {
            for (std::ptrdiff_t ix = 0; ix < nx; ++ix) {
                double acc = 0.0, wsum = 0.0;
                for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
                    const std::ptrdiff_t jx = along_x ? ix + k : ix;
                    const std::ptrdiff_t jy = along_x ? iy : iy + k;
                    if (jx < 0 || jx >= nx || jy < 0 || jy >= ny) continue;
                    const double w = kernel[static_cast<std::size_t>(k + radius)];
                    acc += w * in[static_cast<std::size_t>(jy * nx + jx)];
                    wsum += w;
                }
                out[static_cast<std::size_t>(iy * nx + ix)] = acc / wsum;
            }
        }
        return out;
    };
    ContourGrid blurred = grid;
    blurred.z = pass(pass(grid.z, true), false);
    return blurred;
}

ContourGrid export_contour_data(std::span<const SurfaceSample> samples, const ContourOptions& options) {
    return gaussian_blur(interpolate_surface(samples, options.resolution), options.smoothing_sigma);
}

std::string format_contour(const ContourGrid& grid) {
    std::ostringstream out;
    out << "log_lr\tlog_batch\tloss\n";
    char buf[96];
    for (std::size_t iy = 0; iy < grid.log_batch.size(); ++iy) {
        for (std::size_t ix = 0; ix < grid.log_lr.size(); ++ix) {
            std::snprintf(buf, sizeof buf, "%.10g\t%.10g\t%.10g\n", grid.log_lr[ix], grid.log_batch[iy], grid.at(ix, iy));
            out << buf;
        }
    }
    return out.str();
}

}  // namespace cpl
