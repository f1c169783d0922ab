#include "bgeo/normalform.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <tuple>

namespace bgeo {

namespace {

using Gauss = boost::math::quadrature::gauss<double, 30>;

constexpr std::size_t kMaxDim = 16;

Expr number_expr(double v) {
    if (v == std::round(v) && std::abs(v) < 1e15) return Expr::integer(static_cast<std::int64_t>(v));
    return Expr::real(v);
}

double radical_inverse(std::size_t i, unsigned base) {
    double inv = 1.0 / base, r = 0.0, scale = inv;
    while (i > 0) {
        r += static_cast<double>(i % base) * scale;
        i /= base;
        scale *= inv;
    }
    return r;
}

constexpr std::array<unsigned, 16> kPrimes{2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};

EquivOptions equiv_for(const Bindings& params) {
    EquivOptions o;
    o.fixed_params = params;
    return o;
}

double patch_radius(const Patch& p) {
    double r = std::numeric_limits<double>::infinity();
    for (const auto& c : p.coords()) r = std::min(r, 0.5 * (c.hi - c.lo));
    return r;
}

}  // namespace

// ---------------------------------------------------------------- Darboux

DarbouxResult darboux2d(const BForm& w, const DarbouxOptions& opts, const Bindings& params) {
    const Patch& p = w.patch();
    if (p.dim() != 2) throw NormalFormError("darboux2d needs a 2-dimensional patch");
    if (w.degree() != 2) throw NormalFormError("darboux2d needs a b-form of degree 2");
    Expr f = normalize(w.f());
    if (f.op() != Op::Coord || !p.index_of(f.name())) throw NormalFormError("defining function must be a coordinate");
    DarbouxResult res;
    res.z_coord = *p.index_of(f.name());
    res.s_coord = 1 - res.z_coord;
    const int sign = res.z_coord == 0 ? 1 : -1;
    const std::string z1 = p.coord(res.z_coord).name;
    const std::string z2 = p.coord(res.s_coord).name;
    const Coordinate& s_axis = p.coord(res.s_coord);
    if (!(s_axis.lo <= 0.0 && 0.0 <= s_axis.hi)) {
        throw NormalFormError("patch is not star-shaped in " + z2 + " about 0");
    }

    res.g = normalize(w.times_f().coeff({0, 1}) * Expr::integer(sign));
    CompiledExpr g(res.g, p, params);

    Grid grid = make_grid(p, GridSpec{opts.grid, static_cast<std::size_t>(opts.grid) * opts.grid});
    res.grid = grid.per_axis();
    double min_g = std::numeric_limits<double>::infinity();
    int g_sign = 0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        auto x = grid.point(k);
        double v = g.eval_nothrow(x);
        if (!std::isfinite(v)) throw NormalFormError("z1 times the coefficient is not smooth at a grid point");
        int s = v > 0 ? 1 : (v < 0 ? -1 : 0);
        if (s == 0 || (g_sign != 0 && s != g_sign)) throw NormalFormError("g vanishes on the patch");
        g_sign = s;
        min_g = std::min(min_g, std::abs(v));
    }
    if (min_g < 1e-12) throw NormalFormError("g vanishes on the patch");
    res.min_abs_g = min_g;

    if (auto G = antiderivative(res.g, z2)) {
        Expr t = normalize(*G - substitute(*G, z2, Expr::integer(0)));
        if (expr_equiv(diff_expr(t, z2), res.g, p, equiv_for(params))) {
            res.t = t;
            res.symbolic_identity = true;
        }
    }

    CoordinateChange& ch = res.change;
    ch.source = p;
    const std::size_t zi = res.z_coord, si = res.s_coord;
    if (res.t) {
        ch.symbolic = true;
        ch.forward = {Expr::coord(z1), *res.t};
        auto ct = std::make_shared<CompiledExpr>(*res.t, p, params);
        ch.evaluate = [ct, zi](std::span<const double> x) { return std::vector<double>{x[zi], (*ct)(x)}; };
    } else {
        auto cg = std::make_shared<CompiledExpr>(g);
        ch.evaluate = [cg, zi, si](std::span<const double> x) {
            std::array<double, 2> y{};
            double t = Gauss::integrate(
                [&](double s) {
                    y[zi] = x[zi];
                    y[si] = s;
                    return (*cg)(y);
                },
                0.0, x[si]);
            return std::vector<double>{x[zi], t};
        };
    }
    ch.jacobian = normalize(res.g * Expr::integer(sign));

    double tmin = std::numeric_limits<double>::infinity(), tmax = -tmin, resid = 0.0;
    const double h = opts.fd_step;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        auto x = grid.point(k);
        double t0 = ch.evaluate(x)[1];
        tmin = std::min(tmin, t0);
        tmax = std::max(tmax, t0);
        auto xp = x, xm = x;
        xp[si] += h;
        xm[si] -= h;
        double dt = (ch.evaluate(xp)[1] - ch.evaluate(xm)[1]) / (2 * h);
        resid = std::max(resid, std::abs(dt - g(x)));
    }
    res.max_residual = resid;
    if (!(tmin < tmax)) tmax = tmin + 1.0;
    std::string zname = "z", tname = "t";
    ch.target = Patch({Coordinate{zname, p.coord(zi).lo, p.coord(zi).hi, std::nullopt},
                       Coordinate{tname, tmin, tmax, std::nullopt}},
                      p.params());
    return res;
}

BForm standard_bsymplectic(const Patch& patch) {
    const std::size_t n = patch.dim();
    if (n < 2 || n % 2 != 0) throw NormalFormError("standard model needs an even dimension");
    SmoothForm alpha = SmoothForm::differential(patch, 0);
    SmoothForm beta(patch, 2);
    for (std::size_t i = 2; i + 1 < n; i += 2) {
        beta.accumulate({static_cast<int>(i), static_cast<int>(i + 1)}, Expr::integer(1));
    }
    return BForm(alpha, beta, patch.symbol(1));
}

BForm bcotangent_canonical(const Patch& patch) {
    const std::size_t n = patch.dim();
    if (n < 2 || n % 2 != 0) throw NormalFormError("b-cotangent model needs an even dimension");
    SmoothForm alpha = SmoothForm::function(patch, patch.symbol(0));
    SmoothForm beta(patch, 1);
    for (std::size_t i = 2; i + 1 < n; i += 2) beta.accumulate({static_cast<int>(i + 1)}, patch.symbol(i));
    return d(BForm(alpha, beta, patch.symbol(1)));
}

DarbouxReport darboux_verify(const BForm& w, const std::vector<double>& point, std::size_t samples,
                             const Bindings& params) {
    const Patch& p = w.patch();
    if (point.size() != p.dim()) throw NormalFormError("point has the wrong dimension");
    if (w.degree() != 2) throw NormalFormError("darboux_verify needs a b-form of degree 2");
    CompiledBForm2 cw(w, params);
    if (std::abs(cw.f(point)) > 1e-8) throw NormalFormError("point is not on Z");
    Eigen::MatrixXd W = cw.matrix(point);
    if (!(std::sqrt(std::abs(W.determinant())) > 1e-8)) throw NormalFormError("nondegeneracy fails at the point");

    DarbouxReport rep;
    rep.radius = 0.1 * patch_radius(p);
    std::vector<std::vector<double>> pts;
    for (std::size_t i = 1; pts.size() < samples && i < 100 * samples + 100; ++i) {
        std::vector<double> x(p.dim());
        bool inside = true;
        for (std::size_t a = 0; a < p.dim(); ++a) {
            x[a] = point[a] + rep.radius * (2 * radical_inverse(i, kPrimes[a % kPrimes.size()]) - 1);
            const auto& c = p.coord(a);
            if (!c.period && (x[a] < c.lo || x[a] > c.hi)) inside = false;
        }
        if (inside && std::abs(cw.f(x)) > 1e-6) pts.push_back(std::move(x));
    }
    rep.samples = pts.size();

    if (p.dim() == 2) {
        DarbouxResult dr = darboux2d(w, {}, params);
        rep.method = "darboux2d";
        rep.exact = dr.symbolic_identity;
        CompiledExpr g(dr.g, p, params);
        const double h = 1e-5;
        for (const auto& x : pts) {
            auto xp = x, xm = x;
            xp[dr.s_coord] += h;
            xm[dr.s_coord] -= h;
            double dt = (dr.change.evaluate(xp)[1] - dr.change.evaluate(xm)[1]) / (2 * h);
            rep.max_residual = std::max(rep.max_residual, std::abs(dt - g(x)));
        }
        return rep;
    }

    if (!expr_equiv(w.f(), p.symbol(1), p, equiv_for(params))) {
        throw NormalFormError("defining function is not the second coordinate of a built-in normal-form chart");
    }
    BForm model = standard_bsymplectic(p);
    rep.method = "model";
    rep.exact = bforms_equiv(w, model, equiv_for(params));
    CompiledBForm2 cm(model, params);
    for (const auto& x : pts) {
        Eigen::MatrixXd diff = cw.matrix(x, 1) - cm.matrix(x, 1);
        rep.max_residual = std::max(rep.max_residual, diff.cwiseAbs().maxCoeff());
    }
    return rep;
}

// ---------------------------------------------------------------- Poincare primitive

RadialPrimitive::RadialPrimitive(const SmoothForm& rho, std::vector<double> center, const Bindings& params)
    : patch_(rho.patch()), degree_(rho.degree() - 1), center_(std::move(center)) {
    const std::size_t n = patch_.dim();
    if (rho.degree() < 1) throw NormalFormError("primitive needs a form of positive degree");
    if (center_.size() != n) throw NormalFormError("center has the wrong dimension");
    if (!form_is_zero(d(rho), equiv_for(params))) throw NormalFormError("form is not closed");
    basis_ = basis_indices(n, degree_);
    const int k = rho.degree();

    std::vector<Expr> radial(n);
    for (std::size_t i = 0; i < n; ++i) radial[i] = patch_.symbol(i) - number_expr(center_[i]);

    const std::string s = "__s";
    std::map<std::string, Expr> ray;
    for (std::size_t i = 0; i < n; ++i) ray[patch_.coord(i).name] = number_expr(center_[i]) + Expr::coord(s) * radial[i];
    SmoothForm sigma(patch_, degree_);
    bool ok = true;
    for (const auto& [idx, c] : rho.coeffs()) {
        Expr integrand = expand(substitute(c, ray) * pow(Expr::coord(s), Expr::integer(k - 1)));
        auto F = antiderivative(integrand, s);
        if (!F) {
            ok = false;
            break;
        }
        Expr A = normalize(substitute(*F, s, Expr::integer(1)) - substitute(*F, s, Expr::integer(0)));
        sigma = sigma + interior(radial, SmoothForm::basis(patch_, idx, A));
    }
    if (ok && forms_equiv(d(sigma), rho, equiv_for(params))) {
        symbolic_ = sigma;
        for (const auto& I : basis_) compiled_.emplace_back(sigma.coeff(I), patch_, params);
    } else {
        for (const auto& [idx, c] : rho.coeffs()) {
            rho_indices_.push_back(idx);
            rho_.emplace_back(c, patch_, params);
        }
    }
}

std::vector<double> RadialPrimitive::values(std::span<const double> x) const {
    std::vector<double> out(basis_.size(), 0.0);
    if (symbolic_) {
        for (std::size_t i = 0; i < basis_.size(); ++i) out[i] = compiled_[i](x);
        return out;
    }
    const std::size_t n = patch_.dim();
    const int k = degree_ + 1;
    std::array<double, kMaxDim> y{};
    for (std::size_t r = 0; r < rho_.size(); ++r) {
        double A = Gauss::integrate(
            [&](double s) {
                for (std::size_t i = 0; i < n; ++i) y[i] = center_[i] + s * (x[i] - center_[i]);
                return std::pow(s, k - 1) * rho_[r](std::span<const double>(y.data(), n));
            },
            0.0, 1.0);
        const Index& I = rho_indices_[r];
        for (int m = 0; m < k; ++m) {
            Index J;
            for (int q = 0; q < k; ++q)
                if (q != m) J.push_back(I[static_cast<std::size_t>(q)]);
            auto pos = std::lower_bound(basis_.begin(), basis_.end(), J) - basis_.begin();
            double sgn = m % 2 == 0 ? 1.0 : -1.0;
            auto c = static_cast<std::size_t>(I[static_cast<std::size_t>(m)]);
            out[static_cast<std::size_t>(pos)] += sgn * A * (x[c] - center_[c]);
        }
    }
    return out;
}

RadialPrimitive poincare_primitive(const SmoothForm& rho, const std::vector<double>& center, const Bindings& params) {
    return RadialPrimitive(rho, center, params);
}

double primitive_residual(const RadialPrimitive& p, const SmoothForm& rho, const std::vector<std::vector<double>>& points,
                          double step, const Bindings& params) {
    const std::size_t n = rho.patch().dim();
    const int k = rho.degree();
    auto sig_basis = basis_indices(n, k - 1);
    auto rho_basis = basis_indices(n, k);
    double worst = 0.0;
    for (const auto& x : points) {
        std::vector<std::vector<double>> grad(n);
        for (std::size_t i = 0; i < n; ++i) {
            auto xp = x, xm = x;
            xp[i] += step;
            xm[i] -= step;
            auto vp = p.values(xp), vm = p.values(xm);
            grad[i].resize(vp.size());
            for (std::size_t c = 0; c < vp.size(); ++c) grad[i][c] = (vp[c] - vm[c]) / (2 * step);
        }
        auto rv = rho.values(x, params);
        for (std::size_t r = 0; r < rho_basis.size(); ++r) {
            const Index& I = rho_basis[r];
            double acc = 0.0;
            for (int m = 0; m < k; ++m) {
                Index J;
                for (int q = 0; q < k; ++q)
                    if (q != m) J.push_back(I[static_cast<std::size_t>(q)]);
                auto pos = static_cast<std::size_t>(std::lower_bound(sig_basis.begin(), sig_basis.end(), J) - sig_basis.begin());
                acc += (m % 2 == 0 ? 1.0 : -1.0) * grad[static_cast<std::size_t>(I[static_cast<std::size_t>(m)])][pos];
            }
            worst = std::max(worst, std::abs(acc - rv[r]));
        }
    }
    return worst;
}

// ---------------------------------------------------------------- Moser

namespace {

/// A family of b-two-forms omega(x, t) compiled on the patch extended by t.
struct Family {
    std::size_t n = 0;
    std::size_t anchor = 0;
    CompiledExpr f;
    std::vector<CompiledExpr> df;
    std::vector<std::pair<std::size_t, CompiledExpr>> alpha;
    std::vector<std::tuple<std::size_t, std::size_t, CompiledExpr>> beta;
};

Patch extended_patch(const Patch& p, const std::string& tname) {
    std::vector<Coordinate> cs = p.coords();
    cs.push_back(Coordinate{tname, 0.0, 1.0, std::nullopt});
    std::vector<std::string> prm;
    for (const auto& q : p.params())
        if (q != tname) prm.push_back(q);
    return Patch(cs, prm);
}

Bindings without(Bindings b, const std::string& name) {
    b.erase(name);
    return b;
}

Family compile_family(const BForm& w, const std::string& tname, std::size_t anchor, const Bindings& params) {
    const Patch& p = w.patch();
    if (p.dim() >= kMaxDim) throw NormalFormError("dimension too large for the Moser verifier");
    if (depends_on(w.f(), tname)) throw NormalFormError("defining function must not depend on t");
    Patch ext = extended_patch(p, tname);
    Bindings prm = without(params, tname);
    auto lift = [&](const Expr& e) { return substitute(e, tname, Expr::coord(tname)); };
    Family F;
    F.n = p.dim();
    F.anchor = anchor;
    F.f = CompiledExpr(w.f(), p, prm);
    for (std::size_t i = 0; i < p.dim(); ++i) F.df.emplace_back(diff_expr(w.f(), p.coord(i).name), p, prm);
    for (const auto& [idx, c] : w.alpha().coeffs())
        F.alpha.emplace_back(static_cast<std::size_t>(idx[0]), CompiledExpr(lift(c), ext, prm));
    for (const auto& [idx, c] : w.beta().coeffs())
        F.beta.emplace_back(static_cast<std::size_t>(idx[0]), static_cast<std::size_t>(idx[1]), CompiledExpr(lift(c), ext, prm));
    return F;
}

/// Target one-form of i_v omega_t = target, as (a, b) for a df/f + b.
using Target = std::function<void(const double* x, double t, double& a, double* b)>;

template <int N>
struct Engine {
    using Mat = Eigen::Matrix<double, N, N>;
    using Vec = Eigen::Matrix<double, N, 1>;

    const Family& fam;
    Target target;
    Eigen::Index n;
    Eigen::Index j;

    Engine(const Family& F, Target tg)
        : fam(F), target(std::move(tg)), n(static_cast<Eigen::Index>(F.n)), j(static_cast<Eigen::Index>(F.anchor)) {}

    Mat frame(const double* x) const {
        std::span<const double> xs(x, fam.n);
        Mat T = Mat::Identity(n, n);
        double fj = fam.df[fam.anchor](xs);
        for (Eigen::Index a = 0; a < n; ++a) {
            if (a != j) T(j, a) = -fam.df[static_cast<std::size_t>(a)](xs) / fj;
        }
        T(j, j) = fam.f(xs) / fj;
        return T;
    }

    Mat matrix(const double* x, double t, const Mat& T) const {
        std::array<double, kMaxDim + 1> xt{};
        std::copy(x, x + fam.n, xt.begin());
        xt[fam.n] = t;
        std::span<const double> xs(xt.data(), fam.n + 1);
        Mat B = Mat::Zero(n, n);
        Vec al = Vec::Zero(n);
        for (const auto& [a, c] : fam.alpha) al(static_cast<Eigen::Index>(a)) = c(xs);
        for (const auto& [a, b, c] : fam.beta) {
            double v = c(xs);
            B(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = v;
            B(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = -v;
        }
        Vec ab = T.transpose() * al;
        Mat W = T.transpose() * B * T;
        for (Eigen::Index a = 0; a < n; ++a) {
            W(a, j) += ab(a);
            W(j, a) -= ab(a);
        }
        return W;
    }

    Vec field(const double* x, double t) const {
        Mat T = frame(x);
        Mat W = matrix(x, t, T);
        std::array<double, kMaxDim> b{};
        double a = 0.0;
        target(x, t, a, b.data());
        Vec s = T.transpose() * Eigen::Map<const Vec>(b.data(), n);
        s(j) += a;
        Vec u = W.partialPivLu().solve(-s);
        return T * u;
    }

    Vec flow(Vec x, int steps) const {
        const double h = 1.0 / steps;
        for (int k = 0; k < steps; ++k) {
            double t = k * h;
            Vec k1 = field(x.data(), t);
            Vec y = x + 0.5 * h * k1;
            Vec k2 = field(y.data(), t + 0.5 * h);
            y = x + 0.5 * h * k2;
            Vec k3 = field(y.data(), t + 0.5 * h);
            y = x + h * k3;
            Vec k4 = field(y.data(), t + h);
            x += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
        }
        return x;
    }

    double min_root_det(const std::vector<std::vector<double>>& pts, int t_checks) const {
        double worst = std::numeric_limits<double>::infinity();
        for (const auto& x : pts) {
            Mat T = frame(x.data());
            for (int k = 0; k < t_checks; ++k) {
                double t = t_checks == 1 ? 0.0 : static_cast<double>(k) / (t_checks - 1);
                double v = std::sqrt(std::abs(matrix(x.data(), t, T).determinant()));
                if (!std::isfinite(v)) v = 0.0;
                worst = std::min(worst, v);
            }
        }
        return worst;
    }

    double residual(const std::vector<double>& x0, int steps, double h) const {
        Vec x = Eigen::Map<const Vec>(x0.data(), n);
        Vec y = flow(x, steps);
        Mat J = Mat::Zero(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            Vec xp = x, xm = x;
            xp(i) += h;
            xm(i) -= h;
            J.col(i) = (flow(xp, steps) - flow(xm, steps)) / (2 * h);
        }
        Mat Tx = frame(x.data());
        Mat Ty = frame(y.data());
        Mat M = Ty.partialPivLu().solve(J * Tx);
        Mat pulled = M.transpose() * matrix(y.data(), 1.0, Ty) * M;
        return (pulled - matrix(x.data(), 0.0, Tx)).cwiseAbs().maxCoeff();
    }

    void on_Z(const std::vector<std::vector<double>>& zpts, double& vmax, double& tangency) const {
        for (const auto& z : zpts) {
            for (int k = 0; k <= 8; ++k) {
                double t = k / 8.0;
                Vec v = field(z.data(), t);
                vmax = std::max(vmax, v.cwiseAbs().maxCoeff());
                double dfv = 0.0;
                std::span<const double> zs(z.data(), fam.n);
                for (Eigen::Index a = 0; a < n; ++a) dfv += fam.df[static_cast<std::size_t>(a)](zs) * v(a);
                tangency = std::max(tangency, std::abs(dfv));
            }
        }
    }
};

struct Collar {
    Patch box;
    bool filter = false;
};

Collar collar_box(const BForm& w, double r) {
    const Patch& p = w.patch();
    Expr f = normalize(w.f());
    Collar c;
    if (f.op() == Op::Coord && p.index_of(f.name())) {
        std::size_t j = *p.index_of(f.name());
        std::vector<Coordinate> cs = p.coords();
        cs[j].lo = std::max(cs[j].lo, -r);
        cs[j].hi = std::min(cs[j].hi, r);
        cs[j].period.reset();
        c.box = Patch(cs, p.params());
    } else {
        c.box = p;
        c.filter = true;
    }
    return c;
}

std::vector<std::vector<double>> collar_points(const Collar& c, const CompiledExpr& f, double r, const GridSpec& spec,
                                               double min_abs_f) {
    Grid g = make_grid(c.box, spec);
    std::vector<std::vector<double>> pts;
    for (std::size_t k = 0; k < g.size(); ++k) {
        auto x = g.point(k);
        double fx = std::abs(f.eval_nothrow(x));
        if (!std::isfinite(fx) || fx < min_abs_f) continue;
        if (c.filter && fx >= r) continue;
        pts.push_back(std::move(x));
    }
    return pts;
}

std::vector<std::vector<double>> z_points(const std::vector<ZGraph>& graphs, const Patch& p, const Bindings& params) {
    std::vector<std::vector<double>> out;
    for (const auto& g : graphs) {
        Patch zp = z_patch_for(p, g);
        CompiledExpr phi(g.phi, zp, params);
        Grid grid = make_grid(zp, GridSpec{16, 1024});
        for (std::size_t k = 0; k < grid.size(); ++k) {
            auto y = grid.point(k);
            std::vector<double> x;
            for (std::size_t a = 0, b = 0; a < p.dim(); ++a) x.push_back(a == g.coord ? phi(y) : y[b++]);
            out.push_back(std::move(x));
        }
    }
    return out;
}

template <int N>
MoserReport run_engine(const BForm& w, const Family& fam, Target target, const MoserOptions& opts,
                       const std::vector<std::vector<double>>& zpts, const Bindings& params) {
    Engine<N> eng(fam, std::move(target));
    MoserReport rep;
    rep.steps = static_cast<int>(std::lround(1.0 / opts.step));
    if (rep.steps < 1) throw NormalFormError("time step must be at most 1");

    double r = 0.5 * patch_radius(w.patch());
    CompiledExpr f(w.f(), w.patch(), without(params, ""));
    int halvings = 0;
    for (;; ++halvings) {
        if (halvings > opts.max_halvings) throw NormalFormError("omega_t is degenerate on every collar tried");
        Collar c = collar_box(w, r);
        auto pts = collar_points(c, f, r, GridSpec{opts.nondeg_grid, 4096}, 0.0);
        if (!pts.empty() && eng.min_root_det(pts, opts.t_checks) > opts.nondeg_tol) break;
        r *= 0.5;
    }
    rep.collar_halvings = halvings;
    rep.collar_radius = r;

    Collar c = collar_box(w, r);
    auto pts = collar_points(c, f, r, GridSpec{opts.grid, opts.max_points}, 10 * opts.fd_step);
    rep.grid = make_grid(c.box, GridSpec{opts.grid, opts.max_points}).per_axis();
    rep.samples = pts.size();
    for (const auto& x : pts) {
        double res = eng.residual(x, rep.steps, opts.fd_step);
        if (!std::isfinite(res)) throw NormalFormError("flow left the domain of the forms");
        rep.residual_grid.push_back(ResidualSample{x, res});
        rep.max_residual = std::max(rep.max_residual, res);
    }
    eng.on_Z(zpts, rep.vfield_on_Z_max, rep.tangency_on_Z_max);
    return rep;
}

MoserReport dispatch(const BForm& w, const Family& fam, Target target, const MoserOptions& opts,
                     const std::vector<std::vector<double>>& zpts, const Bindings& params) {
    switch (fam.n) {
        case 2: return run_engine<2>(w, fam, std::move(target), opts, zpts, params);
        case 4: return run_engine<4>(w, fam, std::move(target), opts, zpts, params);
        case 6: return run_engine<6>(w, fam, std::move(target), opts, zpts, params);
        default: return run_engine<Eigen::Dynamic>(w, fam, std::move(target), opts, zpts, params);
    }
}

std::vector<double> center_on_Z(const Patch& p, const ZGraph& g, const Bindings& params) {
    Patch zp = z_patch_for(p, g);
    std::vector<double> y;
    for (const auto& c : zp.coords()) y.push_back(c.period ? c.lo : 0.5 * (c.lo + c.hi));
    CompiledExpr phi(g.phi, zp, params);
    std::vector<double> x;
    for (std::size_t a = 0, b = 0; a < p.dim(); ++a) x.push_back(a == g.coord ? phi(y) : y[b++]);
    return x;
}

void require_two_form(const BForm& w) {
    if (w.degree() != 2) throw NormalFormError("Moser verification needs b-forms of degree 2");
    if (w.patch().dim() % 2 != 0) throw NormalFormError("Moser verification needs an even-dimensional patch");
}

}  // namespace

MoserReport moser_relative_verify(const BForm& w0, const BForm& w1, const MoserOptions& opts, const Bindings& params) {
    require_two_form(w0);
    require_two_form(w1);
    if (!(w0.patch() == w1.patch())) throw NormalFormError("forms live on different patches");
    const Patch& p = w0.patch();
    if (!expr_equiv(w0.f(), w1.f(), p, equiv_for(params))) throw NormalFormError("forms use different defining functions");
    if (!bforms_equiv(d(w0), BForm(SmoothForm(p, 2), SmoothForm(p, 3), w0.f()), equiv_for(params)))
        throw NormalFormError("omega_0 is not closed");
    if (!bforms_equiv(d(w1), BForm(SmoothForm(p, 2), SmoothForm(p, 3), w0.f()), equiv_for(params)))
        throw NormalFormError("omega_1 is not closed");
    BForm diff = w0 - w1;
    auto smooth = is_smooth(diff, params);
    if (smooth.status != SmoothStatus::Smooth) {
        throw NormalFormError("omega_0 - omega_1 is not smooth: inputs do not agree on Z");
    }
    SmoothForm rho = *smooth.form;

    auto graphs = zero_set_graphs(w0.f(), p, params);
    if (graphs.empty()) throw NormalFormError("Z is empty on the patch");
    for (const auto& g : graphs) {
        if (!form_is_zero(restrict_form(rho, g, z_patch_for(p, g)), equiv_for(params))) {
            throw NormalFormError("omega_0 - omega_1 does not restrict to zero on Z");
        }
    }
    const ZGraph& g0 = graphs.front();
    auto prim = std::make_shared<RadialPrimitive>(rho, center_on_Z(p, g0, params), params);

    const std::size_t n = p.dim();
    auto zpts = z_points(graphs, p, params);
    Patch zp = z_patch_for(p, g0);
    auto phi = std::make_shared<CompiledExpr>(g0.phi, zp, params);
    auto dphi = std::make_shared<std::vector<CompiledExpr>>();
    for (const auto& c : zp.coords()) dphi->emplace_back(diff_expr(g0.phi, c.name), zp, params);
    const std::size_t gj = g0.coord;

    // Pullback of sigma to Z; it is closed, and subtracting its lift along
    // the projection forgetting x_gj leaves a primitive vanishing on Z.
    auto tangential = [prim, phi, dphi, gj, n](const double* x, double* corr) {
        std::array<double, kMaxDim> y{}, q{};
        for (std::size_t a = 0, b = 0; a < n; ++a)
            if (a != gj) y[b++] = x[a];
        double ph = (*phi)(std::span<const double>(y.data(), n - 1));
        for (std::size_t a = 0; a < n; ++a) q[a] = a == gj ? ph : x[a];
        auto s = prim->values(std::span<const double>(q.data(), n));
        for (std::size_t a = 0, b = 0; a < n; ++a) {
            corr[a] = a == gj ? 0.0 : s[a] + s[gj] * (*dphi)[b++](std::span<const double>(y.data(), n - 1));
        }
    };
    double on_z = 0.0;
    for (const auto& z : zpts) {
        std::array<double, kMaxDim> corr{};
        tangential(z.data(), corr.data());
        for (std::size_t a = 0; a < n; ++a) on_z = std::max(on_z, std::abs(corr[a]));
    }
    const bool correct = on_z > opts.tangency_tol;

    Target target = [prim, tangential, correct, n](const double* x, double, double& a, double* b) {
        auto s = prim->values(std::span<const double>(x, n));
        a = 0.0;
        std::array<double, kMaxDim> corr{};
        if (correct) tangential(x, corr.data());
        for (std::size_t i = 0; i < n; ++i) b[i] = s[i] - corr[i];
    };

    const std::string tname = "__t";
    Expr t = Expr::coord(tname);
    BForm family = w0.scaled(Expr::integer(1) - t) + w1.scaled(t);
    Family fam = compile_family(family, tname, anchor_coordinate(w0.f(), p, params), params);
    MoserReport rep = dispatch(w0, fam, target, opts, zpts, params);
    rep.primitive = prim->symbolic() ? "symbolic" : "quadrature";
    rep.closed_correction = correct;
    if (prim->symbolic()) {
        SmoothForm sigma = *prim->symbolic();
        if (correct) {
            SmoothForm tau = restrict_form(sigma, g0, zp);
            SmoothForm lifted(p, 1);
            for (const auto& [idx, c] : tau.coeffs()) {
                int a = idx[0] < static_cast<int>(gj) ? idx[0] : idx[0] + 1;
                lifted.accumulate({a}, c);
            }
            sigma = sigma - lifted;
        }
        rep.primitive_form = sigma;
    }
    return rep;
}

MoserReport moser_global_verify(const BForm& family, const BForm& mu, const std::string& tname, const MoserOptions& opts,
                                const Bindings& params) {
    require_two_form(family);
    const Patch& p = family.patch();
    if (!p.is_param(tname)) throw NormalFormError("'" + tname + "' is not a parameter of the family");
    if (mu.degree() != 1 || !(mu.patch() == p)) throw NormalFormError("mu must be a one-form on the family's patch");
    BForm m = mu;
    if (!expr_equiv(mu.f(), family.f(), p, equiv_for(without(params, tname)))) {
        if (!mu.is_smooth_representation()) throw NormalFormError("mu uses a different defining function");
        m = BForm::from_smooth(mu.beta(), family.f());
    }
    auto dt_form = [&](const SmoothForm& s) {
        SmoothForm out(p, s.degree());
        for (const auto& [idx, c] : s.coeffs()) out.accumulate(idx, diff_expr(c, tname));
        return out;
    };
    if (!bforms_equiv(d(family), BForm(SmoothForm(p, 2), SmoothForm(p, 3), family.f()), equiv_for(without(params, tname))))
        throw NormalFormError("omega_t is not closed");
    BForm dfam(dt_form(family.alpha()), dt_form(family.beta()), family.f());
    if (!bforms_equiv(d(m), dfam, equiv_for(without(params, tname)))) {
        throw NormalFormError("d mu_t differs from d omega_t / dt");
    }

    const std::size_t n = p.dim();
    Patch ext = extended_patch(p, tname);
    Bindings prm = without(params, tname);
    auto lift = [&](const Expr& e) { return substitute(e, tname, Expr::coord(tname)); };
    auto ma = std::make_shared<std::vector<std::pair<std::size_t, CompiledExpr>>>();
    auto mb = std::make_shared<std::vector<std::pair<std::size_t, CompiledExpr>>>();
    if (!m.alpha().is_structurally_zero()) ma->emplace_back(0, CompiledExpr(lift(m.alpha().coeff({})), ext, prm));
    for (const auto& [idx, c] : m.beta().coeffs()) mb->emplace_back(static_cast<std::size_t>(idx[0]), CompiledExpr(lift(c), ext, prm));

    Target target = [ma, mb, n](const double* x, double t, double& a, double* b) {
        std::array<double, kMaxDim + 1> xt{};
        std::copy(x, x + n, xt.begin());
        xt[n] = t;
        std::span<const double> xs(xt.data(), n + 1);
        a = 0.0;
        for (const auto& [i, c] : *ma) a = -c(xs);
        std::fill(b, b + n, 0.0);
        for (const auto& [i, c] : *mb) b[i] = -c(xs);
    };

    Family fam = compile_family(family, tname, anchor_coordinate(family.f(), p, prm), params);
    std::vector<std::vector<double>> zpts;
    try {
        zpts = z_points(zero_set_graphs(family.f(), p, prm), p, prm);
    } catch (const FormError&) {
        auto tr = transversality_check(family.f(), p, GridSpec{16, 4096}, 1e-6, prm);
        zpts = tr.zeros;
    }
    MoserReport rep = dispatch(family, fam, target, opts, zpts, prm);
    rep.primitive = "supplied";
    return rep;
}

ConvergenceReport moser_convergence(const BForm& w0, const BForm& w1, const MoserOptions& base, const Bindings& params) {
    ConvergenceReport c;
    c.coarse = moser_relative_verify(w0, w1, base, params);
    MoserOptions fine = base;
    fine.step = base.step / 2;
    fine.grid = base.grid * 2;
    fine.max_points = base.max_points * (std::size_t{1} << w0.patch().dim());
    c.fine = moser_relative_verify(w0, w1, fine, params);
    c.order = std::log2(c.coarse.max_residual / c.fine.max_residual);
    return c;
}

}  // namespace bgeo
