#include "bgeo/extension.hpp"

#include <fmt/format.h>

#include <cmath>
#include <numbers>

namespace bgeo {

namespace {

constexpr double kMoserTolerance = 1e-4;

EquivOptions equiv_for(const Bindings& params) {
    EquivOptions o;
    o.fixed_params = params;
    return o;
}

SmoothForm rehome_form(const SmoothForm& w, const Patch& patch) {
    SmoothForm out(patch, w.degree());
    for (const auto& [idx, c] : w.coeffs()) out.accumulate(idx, c);
    return out;
}

/// Pullback along the projection Z x R -> Z when the new coordinate is last.
SmoothForm lift(const SmoothForm& w, const Patch& product) { return rehome_form(w, product); }

Patch product_patch(const HypersurfaceData& data, Coordinate normal) {
    if (data.patch.is_coordinate(normal.name) || data.patch.is_param(normal.name)) {
        throw ExtensionError("normal coordinate '" + normal.name + "' clashes with a symbol of Z");
    }
    std::vector<Coordinate> cs = data.patch.coords();
    cs.push_back(std::move(normal));
    return Patch(cs, data.patch.params());
}

void require_passing(const HypersurfaceData& data) {
    auto rep = check_defining_forms(data);
    if (!rep.all_pass) {
        for (const auto& c : rep.checks) {
            if (!c.ok) throw ExtensionError("defining forms fail '" + c.name + "': " + c.detail);
        }
    }
}

void verify_model(ExtensionModel& m, const ExtensionOptions& opts) {
    const Bindings& params = m.data.params;
    BForm dw = d(m.form);
    if (!form_is_zero(dw.times_f(), equiv_for(params))) {
        throw ExtensionError("extension is not closed");
    }
    m.provenance.push_back("closed");
    auto nd = nondegeneracy_check(m.form, opts.grid, params, opts.threshold);
    if (!nd.nondegenerate) {
        std::string where;
        for (double v : nd.argmin) where += fmt::format("{}{:.6g}", where.empty() ? "" : ", ", v);
        throw ExtensionError(fmt::format("extension degenerates: |top coefficient| = {:.3g} at ({})", nd.min_abs, where));
    }
    m.provenance.push_back(fmt::format("nondegenerate (min |coefficient| {:.6g} on {}^{} grid)", nd.min_abs,
                                       nd.grid_per_axis, m.patch.dim()));
}

}  // namespace

BForm rehome(const BForm& w, const Patch& patch) {
    return BForm(rehome_form(w.alpha(), patch), rehome_form(w.beta(), patch), w.f());
}

SmoothForm leafwise_volume(const HypersurfaceData& data) {
    const std::size_t m = data.patch.dim();
    if (m % 2 == 0) throw ExtensionError("Z must have odd dimension");
    SmoothForm v = data.alpha;
    for (std::size_t k = 1; k < (m + 1) / 2; ++k) v = wedge(v, data.omega);
    return v;
}

DefiningReport check_defining_forms(const HypersurfaceData& data, const GridSpec& spec, double threshold) {
    DefiningReport rep;
    rep.threshold = threshold;
    const Patch& p = data.patch;
    if (p.dim() % 2 == 0) throw ExtensionError("Z must have odd dimension");
    if (data.alpha.degree() != 1 || data.omega.degree() != 2) throw ExtensionError("alpha must be a 1-form and omega a 2-form");
    Grid grid = make_grid(p, spec);
    rep.grid_per_axis = grid.per_axis();

    auto nowhere_zero = [&](const std::string& name, const SmoothForm& w, bool same_sign) {
        DefiningCheck c{name, true, "", {}};
        double worst = std::numeric_limits<double>::infinity();
        int sign = 0;
        for (std::size_t k = 0; k < grid.size(); ++k) {
            auto x = grid.point(k);
            auto vals = w.values(x, data.params);
            double mag = 0.0;
            for (double v : vals) mag = std::max(mag, std::abs(v));
            if (!std::isfinite(mag)) mag = 0.0;
            if (same_sign && mag > threshold) {
                int s = vals.front() > 0 ? 1 : -1;
                if (sign != 0 && s != sign) mag = 0.0;
                sign = s;
            }
            if (mag < worst) {
                worst = mag;
                if (mag <= threshold) c.witness = x;
            }
        }
        c.ok = worst > threshold;
        c.detail = fmt::format("min magnitude {:.6g} on {}^{} grid", worst, grid.per_axis(), p.dim());
        rep.checks.push_back(std::move(c));
    };
    auto closed = [&](const std::string& name, const SmoothForm& w) {
        bool ok = form_is_zero(d(w), equiv_for(data.params));
        rep.checks.push_back(DefiningCheck{name, ok, ok ? "closed" : "d is nonzero: " + d(w).str(), {}});
    };

    nowhere_zero("alpha nowhere vanishing", data.alpha, false);
    closed("d alpha = 0", data.alpha);
    closed("d omega = 0", data.omega);
    nowhere_zero("alpha ^ omega^(n-1) nowhere vanishing", leafwise_volume(data), true);
    rep.all_pass = std::all_of(rep.checks.begin(), rep.checks.end(), [](const auto& c) { return c.ok; });
    return rep;
}

ExtensionModel build_extension(const HypersurfaceData& data, double eps, const std::string& normal,
                               const ExtensionOptions& opts) {
    if (!(eps > 0)) throw ExtensionError("eps must be positive");
    require_passing(data);
    ExtensionModel m;
    m.kind = ExtensionKind::Collar;
    m.eps = eps;
    m.normal = normal;
    m.data = data;
    m.patch = product_patch(data, Coordinate{normal, -eps, eps, std::nullopt});
    m.provenance.push_back("defining forms pass");
    m.form = BForm(lift(data.alpha, m.patch), lift(data.omega, m.patch), Expr::coord(normal));
    verify_model(m, opts);

    auto rs = restrict_to_Z(m.form, data.params);
    bool ok = rs.size() == 1;
    if (ok) {
        const auto& r = rs.front();
        ok = forms_equiv(rehome_form(r.alpha_tilde, data.patch), data.alpha, equiv_for(data.params)) &&
             forms_equiv(rehome_form(r.beta_tilde, data.patch), data.omega, equiv_for(data.params));
    }
    if (!ok) throw ExtensionError("restriction to Z does not return (alpha, omega)");
    m.provenance.push_back("restriction returns (alpha, omega)");
    return m;
}

ExtensionModel build_sine_extension(const HypersurfaceData& data, const std::string& normal,
                                    const ExtensionOptions& opts) {
    require_passing(data);
    constexpr double kTwoPi = 2 * std::numbers::pi;
    ExtensionModel m;
    m.kind = ExtensionKind::Sine;
    m.normal = normal;
    m.data = data;
    m.patch = product_patch(data, Coordinate{normal, 0.0, kTwoPi, kTwoPi});
    m.provenance.push_back("defining forms pass");
    Expr s = Expr::coord(normal);
    SmoothForm pa = lift(data.alpha, m.patch);
    SmoothForm ds = SmoothForm::differential(m.patch, m.patch.dim() - 1);
    // (1/sin s) ds ^ p*alpha = -cos s p*alpha ^ d(sin s)/sin s + sin s ds ^ p*alpha
    m.form = BForm(pa.scaled(-cos(s)), lift(data.omega, m.patch) + wedge(ds, pa).scaled(sin(s)), sin(s));
    verify_model(m, opts);
    auto rs = restrict_to_Z(m.form, data.params);
    if (rs.size() != 2) throw ExtensionError(fmt::format("expected two copies of Z, found {}", rs.size()));
    m.provenance.push_back("zero set: two copies of Z");
    return m;
}

CompareVerdict compare_extensions(const ExtensionModel& m1, const ExtensionModel& m2, bool run_moser,
                                  const MoserOptions& moser) {
    if (!(m1.data.patch == m2.data.patch) || m1.normal != m2.normal) throw ExtensionError("models live over different Z patches");
    CompareVerdict v;
    const Bindings& params = m1.data.params;
    auto r1 = restrict_to_Z(m1.form, params);
    auto r2 = restrict_to_Z(m2.form, params);
    v.same_restriction = r1.size() == r2.size();
    for (std::size_t i = 0; v.same_restriction && i < r1.size(); ++i) {
        v.same_restriction = forms_equiv(rehome_form(r1[i].alpha_tilde, r2[i].z_patch), r2[i].alpha_tilde, equiv_for(params)) &&
                             forms_equiv(rehome_form(r1[i].beta_tilde, r2[i].z_patch), r2[i].beta_tilde, equiv_for(params));
    }
    if (!v.same_restriction) {
        v.detail = "restrictions to Z differ";
        return v;
    }
    v.detail = "same restriction; modular-class comparison deferred";
    if (run_moser && m1.kind == ExtensionKind::Collar && m2.kind == ExtensionKind::Collar) {
        const ExtensionModel& small = m1.eps <= m2.eps ? m1 : m2;
        BForm w0 = rehome(m1.form, small.patch);
        BForm w1 = rehome(m2.form, small.patch);
        v.moser = moser_relative_verify(w0, w1, moser, params);
        v.detail += fmt::format("; Moser residual {:.3g} on |{}| < {:.3g}", v.moser->max_residual, m1.normal,
                                v.moser->collar_radius);
    }
    v.equivalent = !v.moser || v.moser->max_residual < kMoserTolerance;
    return v;
}

}  // namespace bgeo
