#include "bgeo/surface2d.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <map>
#include <numbers>

namespace bgeo {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

std::string topology_name(Topology t) { return t == Topology::Sphere ? "sphere" : "torus"; }

Topology parse_topology(const std::string& name) {
    if (name == "sphere") return Topology::Sphere;
    if (name == "torus") return Topology::Torus;
    throw SurfaceError("unknown topology '" + name + "' (expected sphere or torus)");
}

Patch sphere_chart() { return Patch({Coordinate{"h", -1.0, 1.0, std::nullopt}, Coordinate{"theta", 0.0, kTwoPi, kTwoPi}}); }

Patch torus_chart() {
    return Patch({Coordinate{"theta1", 0.0, kTwoPi, kTwoPi}, Coordinate{"theta2", 0.0, kTwoPi, kTwoPi}});
}

int chart_orientation(Topology t) { return t == Topology::Sphere ? -1 : 1; }

SurfaceStructure SurfaceStructure::make(Topology topology, const std::string& P, const std::string& V, int orientation) {
    SurfaceStructure s;
    s.topology = topology;
    s.patch = topology == Topology::Sphere ? sphere_chart() : torus_chart();
    s.P = normalize(parse_expr(P, s.patch));
    s.V = normalize(parse_expr(V, s.patch));
    if (orientation != 1 && orientation != -1) throw SurfaceError("orientation must be +1 or -1");
    s.orientation = orientation;
    return s;
}

// ---------------------------------------------------------------- fields

VectorField2 modular_field(const Expr& P, const Expr& V, const Patch& patch) {
    if (patch.dim() != 2) throw SurfaceError("modular_field needs a 2-D patch");
    Expr PV = P * V;
    return VectorField2{normalize(diff_expr(PV, patch.coord(1).name) / V), normalize(neg(diff_expr(PV, patch.coord(0).name)) / V)};
}

VectorField2 modular_field(const SurfaceStructure& s) { return modular_field(s.P, s.V, s.patch); }

VectorField2 hamiltonian_field(const Expr& P, const Expr& g, const Patch& patch) {
    return VectorField2{P * diff_expr(g, patch.coord(1).name), neg(P * diff_expr(g, patch.coord(0).name))};
}

BForm dual_bform(const SurfaceStructure& s) {
    const Patch& p = s.patch;
    Expr P1 = diff_expr(s.P, p.coord(0).name), P2 = diff_expr(s.P, p.coord(1).name);
    Expr n2 = P1 * P1 + P2 * P2;
    SmoothForm alpha(p, 1);
    alpha.accumulate({0}, P2 / n2);
    alpha.accumulate({1}, neg(P1) / n2);
    return BForm(alpha, SmoothForm(p, 2), s.P);
}

// ---------------------------------------------------------------- zero curves

namespace {

struct Chart2 {
    const Patch& patch;
    std::array<bool, 2> periodic{};
    std::array<double, 2> period{};

    explicit Chart2(const Patch& p) : patch(p) {
        for (std::size_t a = 0; a < 2; ++a) {
            periodic[a] = p.coord(a).period.has_value();
            period[a] = periodic[a] ? *p.coord(a).period : 0.0;
        }
    }
    double reduce(std::size_t a, double v) const {
        if (!periodic[a]) return v;
        double lo = patch.coord(a).lo;
        double r = std::fmod(v - lo, period[a]);
        if (r < 0) r += period[a];
        return lo + r;
    }
    double delta(std::size_t a, double from, double to) const {
        double dlt = to - from;
        if (periodic[a]) dlt -= period[a] * std::round(dlt / period[a]);
        return dlt;
    }
};

double refine_root(const std::function<double(double)>& g, double a, double b, double ga, double gb) {
    if (ga == 0.0) return a;
    if (gb == 0.0) return b;
    boost::uintmax_t iters = 200;
    auto tol = [](double l, double r) { return std::abs(r - l) <= 2e-16 * std::max(1.0, std::abs(l)); };
    auto [lo, hi] = boost::math::tools::toms748_solve(g, a, b, ga, gb, tol, iters);
    return 0.5 * (lo + hi);
}

}  // namespace

std::vector<ZeroCurve> extract_zero_set(const SurfaceStructure& s, const SurfaceOptions& opts) {
    const Patch& patch = s.patch;
    Chart2 chart(patch);
    CompiledExpr P(s.P, patch, s.params);
    const int N = std::max(opts.grid, 8);
    std::array<std::vector<double>, 2> axis;
    std::array<int, 2> count{};
    for (std::size_t a = 0; a < 2; ++a) {
        const auto& c = patch.coord(a);
        count[a] = N;
        for (int i = 0; i < N; ++i) {
            axis[a].push_back(chart.periodic[a] ? c.lo + chart.period[a] * (i + 0.5) / N : c.lo + (c.hi - c.lo) * i / (N - 1));
        }
    }
    // coordinate of vertex index i, allowing i == N on periodic axes
    auto coord_at = [&](std::size_t a, int i) {
        if (i >= count[a]) return axis[a][static_cast<std::size_t>(i - count[a])] + chart.period[a];
        return axis[a][static_cast<std::size_t>(i)];
    };
    std::vector<double> val(static_cast<std::size_t>(N * N));
    for (int i = 0; i < N; ++i) {
        for (int j = 0; j < N; ++j) {
            std::array<double, 2> x{axis[0][static_cast<std::size_t>(i)], axis[1][static_cast<std::size_t>(j)]};
            double v = P.eval_nothrow(x);
            if (std::isnan(v)) throw SurfaceError(fmt::format("P cannot be evaluated at ({:.6g}, {:.6g})", x[0], x[1]));
            val[static_cast<std::size_t>(i * N + j)] = v;
        }
    }
    auto value = [&](int i, int j) { return val[static_cast<std::size_t>((i % N) * N + (j % N))]; };
    auto positive = [&](int i, int j) { return value(i, j) >= 0.0; };

    using EdgeKey = std::array<int, 3>;  // axis, i, j (lower vertex, reduced)
    std::map<EdgeKey, std::array<double, 2>> crossing;
    auto edge_point = [&](const EdgeKey& k) {
        auto it = crossing.find(k);
        if (it != crossing.end()) return it->second;
        int a = k[0], i = k[1], j = k[2];
        std::array<double, 2> x0{coord_at(0, i), coord_at(1, j)};
        std::array<double, 2> x1 = x0;
        if (a == 0) {
            x1[0] = coord_at(0, i + 1);
        } else {
            x1[1] = coord_at(1, j + 1);
        }
        auto axis_index = static_cast<std::size_t>(a);
        auto g = [&](double t) {
            std::array<double, 2> y = x0;
            y[axis_index] = t;
            return P.eval_nothrow(y);
        };
        double v0 = value(i, j), v1 = a == 0 ? value(i + 1, j) : value(i, j + 1);
        double t = refine_root(g, x0[axis_index], x1[axis_index], v0, v1);
        std::array<double, 2> z = x0;
        z[axis_index] = t;
        z[0] = chart.reduce(0, z[0]);
        z[1] = chart.reduce(1, z[1]);
        crossing.emplace(k, z);
        return z;
    };

    std::map<EdgeKey, std::vector<EdgeKey>> links;
    auto link = [&](const EdgeKey& a, const EdgeKey& b) {
        links[a].push_back(b);
        links[b].push_back(a);
    };
    int ci = chart.periodic[0] ? N : N - 1;
    int cj = chart.periodic[1] ? N : N - 1;
    for (int i = 0; i < ci; ++i) {
        for (int j = 0; j < cj; ++j) {
            bool s00 = positive(i, j), s10 = positive(i + 1, j), s11 = positive(i + 1, j + 1), s01 = positive(i, j + 1);
            EdgeKey e0{0, i, j}, e1{1, (i + 1) % N, j}, e2{0, i, (j + 1) % N}, e3{1, i, j};
            std::vector<EdgeKey> cut;
            if (s00 != s10) cut.push_back(e0);
            if (s10 != s11) cut.push_back(e1);
            if (s01 != s11) cut.push_back(e2);
            if (s00 != s01) cut.push_back(e3);
            if (cut.size() == 2) {
                link(cut[0], cut[1]);
            } else if (cut.size() == 4) {
                double center = 0.25 * (value(i, j) + value(i + 1, j) + value(i + 1, j + 1) + value(i, j + 1));
                if ((center >= 0.0) == s00) {
                    link(e0, e1);
                    link(e2, e3);
                } else {
                    link(e3, e0);
                    link(e1, e2);
                }
            }
        }
    }

    std::vector<ZeroCurve> curves;
    std::map<EdgeKey, bool> visited;
    for (const auto& [start, nbrs] : links) {
        if (visited[start]) continue;
        // walk from an endpoint when the chain is open
        EdgeKey origin = start;
        {
            EdgeKey prev{-1, -1, -1}, cur = start;
            for (;;) {
                const auto& nb = links[cur];
                if (nb.size() < 2) {
                    origin = cur;
                    break;
                }
                EdgeKey next = nb[0] == prev ? nb[1] : nb[0];
                prev = cur;
                cur = next;
                if (cur == start) break;
            }
        }
        ZeroCurve curve;
        EdgeKey prev{-1, -1, -1}, cur = origin;
        for (;;) {
            visited[cur] = true;
            curve.points.push_back(edge_point(cur));
            const auto& nb = links[cur];
            EdgeKey next{-1, -1, -1};
            for (const auto& n : nb) {
                if (n != prev && !visited[n]) {
                    next = n;
                    break;
                }
            }
            if (next[0] < 0) {
                curve.closed = nb.size() == 2 && std::find(nb.begin(), nb.end(), origin) != nb.end() && cur != origin;
                break;
            }
            prev = cur;
            cur = next;
        }
        std::size_t m = curve.points.size();
        for (std::size_t k = 0; k + 1 < m + (curve.closed ? 1 : 0); ++k) {
            const auto& a = curve.points[k];
            const auto& b = curve.points[(k + 1) % m];
            curve.length += std::hypot(chart.delta(0, a[0], b[0]), chart.delta(1, a[1], b[1]));
        }
        curves.push_back(std::move(curve));
    }

    // validity checks along the curves
    std::vector<CompiledExpr> grad{CompiledExpr(diff_expr(s.P, patch.coord(0).name), patch, s.params),
                                   CompiledExpr(diff_expr(s.P, patch.coord(1).name), patch, s.params)};
    for (const auto& c : curves) {
        for (const auto& x : c.points) {
            double gn = std::hypot(grad[0].eval_nothrow(x), grad[1].eval_nothrow(x));
            if (!(gn > opts.delta_reg)) {
                throw SurfaceError(fmt::format("P vanishes non-transversally near ({:.6g}, {:.6g})", x[0], x[1]));
            }
            if (s.topology == Topology::Sphere && std::abs(x[0]) >= 1.0 - opts.delta_pole) {
                throw SurfaceError("zero curve reaches the chart poles |h| >= 1 - delta_pole");
            }
        }
        if (!c.closed) throw SurfaceError("zero curve is not closed inside the chart");
    }
    // deterministic order: by the first coordinate of the leftmost point
    for (auto& c : curves) {
        auto it = std::min_element(c.points.begin(), c.points.end());
        std::rotate(c.points.begin(), it, c.points.end());
    }
    std::sort(curves.begin(), curves.end(), [](const ZeroCurve& a, const ZeroCurve& b) { return a.points.front() < b.points.front(); });
    return curves;
}

// ---------------------------------------------------------------- periods

PeriodReport modular_period(const SurfaceStructure& s, const ZeroCurve& curve, const SurfaceOptions& opts) {
    if (!curve.closed || curve.points.size() < 3) throw SurfaceError("modular period needs a closed curve");
    const Patch& patch = s.patch;
    Chart2 chart(patch);
    CompiledExpr P(s.P, patch, s.params);
    CompiledExpr P1(diff_expr(s.P, patch.coord(0).name), patch, s.params);
    CompiledExpr P2(diff_expr(s.P, patch.coord(1).name), patch, s.params);
    VectorField2 X = modular_field(s);
    CompiledExpr X1(X.x1, patch, s.params), X2(X.x2, patch, s.params);

    auto project = [&](std::array<double, 2> x) {
        for (int it = 0; it < 30; ++it) {
            double v = P.eval_nothrow(x);
            if (std::abs(v) <= opts.tau_curve) break;
            double g1 = P1.eval_nothrow(x), g2 = P2.eval_nothrow(x);
            double n2 = g1 * g1 + g2 * g2;
            x[0] -= v * g1 / n2;
            x[1] -= v * g2 / n2;
        }
        return std::array<double, 2>{chart.reduce(0, x[0]), chart.reduce(1, x[1])};
    };
    PeriodReport rep;
    rep.min_speed = std::numeric_limits<double>::infinity();
    auto inv_speed = [&](const std::array<double, 2>& x) {
        double g1 = P1.eval_nothrow(x), g2 = P2.eval_nothrow(x);
        double gn = std::hypot(g1, g2);
        double speed = std::abs(X1.eval_nothrow(x) * (-g2) + X2.eval_nothrow(x) * g1) / gn;
        rep.min_speed = std::min(rep.min_speed, speed);
        return 1.0 / speed;
    };

    std::vector<std::array<double, 2>> pts;
    for (const auto& x : curve.points) pts.push_back(project(x));
    for (int level = 0; level <= opts.period_refinements; ++level) {
        if (level > 0) {
            std::vector<std::array<double, 2>> finer;
            for (std::size_t k = 0; k < pts.size(); ++k) {
                const auto& a = pts[k];
                const auto& b = pts[(k + 1) % pts.size()];
                finer.push_back(a);
                finer.push_back(project({a[0] + 0.5 * chart.delta(0, a[0], b[0]), a[1] + 0.5 * chart.delta(1, a[1], b[1])}));
            }
            pts = std::move(finer);
        }
        std::vector<double> w(pts.size());
        for (std::size_t k = 0; k < pts.size(); ++k) w[k] = inv_speed(pts[k]);
        double sum = 0.0;
        for (std::size_t k = 0; k < pts.size(); ++k) {
            const auto& a = pts[k];
            const auto& b = pts[(k + 1) % pts.size()];
            double ds = std::hypot(chart.delta(0, a[0], b[0]), chart.delta(1, a[1], b[1]));
            sum += 0.5 * ds * (w[k] + w[(k + 1) % pts.size()]);
        }
        rep.levels.push_back(sum);
    }
    if (!(rep.min_speed > opts.delta_reg)) throw SurfaceError("modular vector field nearly vanishes on the zero curve");
    // Richardson tableau for an h^2 error expansion
    std::vector<double> t = rep.levels;
    double factor = 4.0;
    while (t.size() > 1) {
        std::vector<double> next;
        for (std::size_t k = 0; k + 1 < t.size(); ++k) next.push_back((factor * t[k + 1] - t[k]) / (factor - 1.0));
        t = std::move(next);
        factor *= 4.0;
    }
    rep.period = t.front();
    return rep;
}

// ---------------------------------------------------------------- volume

VolumeReport regularized_volume(const SurfaceStructure& s, const SurfaceOptions& opts, const std::optional<Expr>& cutoff_factor) {
    const Patch& patch = s.patch;
    VolumeReport rep;
    rep.chart_sign = chart_orientation(s.topology) * s.orientation;
    rep.inner_coord = anchor_coordinate(s.P, patch, s.params);
    const std::size_t in = rep.inner_coord, out = 1 - in;
    CompiledExpr P(s.P, patch, s.params);
    Expr cut = cutoff_factor ? normalize(s.P * *cutoff_factor) : s.P;
    CompiledExpr C(cut, patch, s.params);
    const auto& ci = patch.coord(in);
    const auto& co = patch.coord(out);
    const double in_lo = ci.lo, in_hi = ci.period ? ci.lo + *ci.period : ci.hi;

    auto inner = [&](double u, double eps) {
        std::array<double, 2> x{};
        x[out] = u;
        auto g = [&](double t) {
            x[in] = t;
            return std::abs(C.eval_nothrow(x)) - eps;
        };
        auto integrand = [&](double t) {
            std::array<double, 2> y{};
            y[out] = u;
            y[in] = t;
            return 1.0 / P.eval_nothrow(y);
        };
        const int S = opts.inner_samples;
        std::vector<double> breaks{in_lo};
        double prev_t = in_lo, prev_g = g(in_lo);
        for (int k = 1; k <= S; ++k) {
            double t = in_lo + (in_hi - in_lo) * k / S;
            double gt = g(t);
            if ((prev_g > 0) != (gt > 0)) breaks.push_back(refine_root(g, prev_t, t, prev_g, gt));
            prev_t = t;
            prev_g = gt;
        }
        breaks.push_back(in_hi);
        double total = 0.0;
        for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
            double a = breaks[k], b = breaks[k + 1];
            if (b - a <= 0.0 || g(0.5 * (a + b)) <= 0.0) continue;
            total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, a, b, 15, 1e-13);
        }
        return total;
    };
    auto outer = [&](double eps) {
        if (co.period) {
            const int M = opts.outer_nodes;
            double sum = 0.0;
            for (int k = 0; k < M; ++k) sum += inner(co.lo + *co.period * k / M, eps);
            return sum * *co.period / M;
        }
        return boost::math::quadrature::gauss_kronrod<double, 15>::integrate([&](double u) { return inner(u, eps); }, co.lo, co.hi, 8, 1e-11);
    };

    double eps = opts.eps0;
    for (int k = 0; k <= opts.eps_halvings; ++k) {
        rep.eps.push_back(eps);
        rep.values.push_back(rep.chart_sign * outer(eps));
        eps *= 0.5;
    }
    // The log coefficient of V0 + c log eps + d1 eps + d2 eps^2 decides whether
    // the limit exists; the limit itself comes from the fit without log term.
    const auto m = static_cast<Eigen::Index>(rep.eps.size());
    auto fit = [&](bool with_log) {
        Eigen::MatrixXd A(m, with_log ? 4 : 3);
        Eigen::VectorXd y(m);
        for (Eigen::Index k = 0; k < m; ++k) {
            double e = rep.eps[static_cast<std::size_t>(k)] / opts.eps0;
            Eigen::Index col = 0;
            A(k, col++) = 1.0;
            if (with_log) A(k, col++) = std::log(rep.eps[static_cast<std::size_t>(k)]);
            A(k, col++) = e;
            A(k, col++) = e * e;
            y(k) = rep.values[static_cast<std::size_t>(k)];
        }
        return Eigen::VectorXd(A.colPivHouseholderQr().solve(y));
    };
    rep.log_coefficient = fit(true)(1);
    rep.limit_exists = std::abs(rep.log_coefficient) < opts.tau_log;
    rep.volume = fit(false)(0);
    return rep;
}

// ---------------------------------------------------------------- invariants

RadkoInvariants radko_invariants(const SurfaceStructure& s, const SurfaceOptions& opts) {
    RadkoInvariants inv;
    inv.curves = extract_zero_set(s, opts);
    if (inv.curves.empty()) throw SurfaceError("P has no zeros: not b-Poisson on this surface");
    inv.n = inv.curves.size();
    for (const auto& c : inv.curves) inv.periods.push_back(modular_period(s, c, opts).period);
    std::sort(inv.periods.begin(), inv.periods.end());
    inv.volume_report = regularized_volume(s, opts);
    if (!inv.volume_report.limit_exists) {
        throw SurfaceError(fmt::format("regularized volume does not converge (log coefficient {:.3e})", inv.volume_report.log_coefficient));
    }
    inv.volume = inv.volume_report.volume;
    return inv;
}

ClassifyVerdict classify_pair(const SurfaceStructure& a, const SurfaceStructure& b, double tol, const SurfaceOptions& opts) {
    if (a.topology != b.topology) {
        throw SurfaceError("topology mismatch: " + topology_name(a.topology) + " vs " + topology_name(b.topology));
    }
    ClassifyVerdict v;
    v.first = radko_invariants(a, opts);
    v.second = radko_invariants(b, opts);
    if (v.first.n != v.second.n) {
        v.witness = fmt::format("curve count {} vs {}", v.first.n, v.second.n);
        return v;
    }
    for (std::size_t k = 0; k < v.first.n; ++k) {
        if (std::abs(v.first.periods[k] - v.second.periods[k]) > tol) {
            v.witness = fmt::format("period {:.9g} vs {:.9g}", v.first.periods[k], v.second.periods[k]);
            return v;
        }
    }
    if (std::abs(v.first.volume - v.second.volume) > tol) {
        v.witness = fmt::format("volume {:.9g} vs {:.9g}", v.first.volume, v.second.volume);
        return v;
    }
    v.equivalent = true;
    return v;
}

std::array<int, 3> surface_poisson_cohomology(int genus, int curves) {
    if (genus < 0) throw SurfaceError("genus must be nonnegative");
    if (curves < 1) throw SurfaceError("a b-Poisson structure on a compact surface has at least one zero curve");
    return {1, curves + 2 * genus, curves + 1};
}

}  // namespace bgeo
