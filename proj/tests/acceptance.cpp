// Acceptance run: one PASS/FAIL line per criterion. Tolerances are fixed
// below; oracles are computed here, independently of the library paths
// they check.
#include "bgeo/cohomology.hpp"
#include "bgeo/extension.hpp"
#include "bgeo/normalform.hpp"
#include "bgeo/surface2d.hpp"
#include "random_expr.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/numeric/odeint.hpp>
#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>

using namespace bgeo;
using bgeo::testing::box_patch;
using bgeo::testing::RandomExpr;

namespace {

constexpr double kPi = std::numbers::pi;

namespace tol {
constexpr double period = 1e-6;
constexpr double sphere_volume = 1e-6;
constexpr double asym_volume = 1e-4;
constexpr double log_coefficient = 1e-4;
constexpr double cohomology_seconds = 1.0;
constexpr int property_cases = 200;
constexpr double dualize = 1e-10;
constexpr double alpha_tilde_on_X = 1e-8;
constexpr double darboux_residual = 1e-9;
constexpr double moser_residual = 1e-5;
constexpr double moser_on_Z = 1e-8;
constexpr double moser_order = 3.0;
constexpr double sphere_seconds = 5.0;
constexpr double moser_seconds = 60.0;
constexpr double extension_seconds = 10.0;
}  // namespace tol

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Time for the modular flow to wind once around the periodic axis.
double return_time(const SurfaceStructure& s, std::array<double, 2> x0, std::size_t axis) {
    VectorField2 X = modular_field(s);
    CompiledExpr X1(X.x1, s.patch), X2(X.x2, s.patch);
    using State = std::array<double, 2>;
    auto rhs = [&](const State& x, State& dx, double) {
        dx[0] = X1(x);
        dx[1] = X2(x);
    };
    namespace ode = boost::numeric::odeint;
    auto stepper = ode::make_dense_output(1e-12, 1e-12, ode::runge_kutta_dopri5<State>());
    stepper.initialize(x0, 0.0, 1e-3);
    auto wound = [&](const State& x) { return std::abs(x[axis] - x0[axis]) >= 2 * kPi; };
    while (stepper.current_time() < 1e3) {
        double t_prev = stepper.current_time();
        stepper.do_step(rhs);
        if (!wound(stepper.current_state())) continue;
        double lo = t_prev, hi = stepper.current_time();
        State mid;
        while (hi - lo > 1e-14) {
            double m = 0.5 * (lo + hi);
            stepper.calc_state(m, mid);
            (wound(mid) ? hi : lo) = m;
        }
        return 0.5 * (lo + hi);
    }
    return NAN;
}

// Principal value of the chart-area integral of 1/P(h) over the sphere
// chart, for P depending on h only.
double sphere_volume_oracle(const std::function<double(double)>& inv_P) {
    auto folded = [&](double h) { return inv_P(h) + inv_P(-h); };
    double pv = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(folded, 0.0, 1.0, 15, 1e-14);
    return chart_orientation(Topology::Sphere) * 2 * kPi * pv;
}

Outcome sphere_model() {
    auto t0 = Clock::now();
    auto s = SurfaceStructure::make(Topology::Sphere, "h");
    auto inv = radko_invariants(s);
    double secs = seconds_since(t0);
    double ode = return_time(s, {0.0, 0.5}, 1);
    double vol_oracle = sphere_volume_oracle([](double h) { return 1.0 / h; });
    double period = inv.periods.empty() ? NAN : inv.periods[0];
    bool ok = inv.n == 1 && std::abs(period - 2 * kPi) < tol::period && std::abs(ode - 2 * kPi) < tol::period &&
              std::abs(inv.volume) < tol::sphere_volume && std::abs(vol_oracle) < tol::sphere_volume &&
              secs < tol::sphere_seconds;
    return {ok, fmt::format("n={} period={:.10f} (flow oracle {:.10f}) volume={:.3e} (quadrature oracle {:.3e}) {:.2f}s",
                            inv.n, period, ode, inv.volume, vol_oracle, secs)};
}

Outcome scaled_sphere() {
    auto a = SurfaceStructure::make(Topology::Sphere, "h");
    auto b = SurfaceStructure::make(Topology::Sphere, "2*h");
    auto inv = radko_invariants(b);
    double period = inv.periods.empty() ? NAN : inv.periods[0];
    double ode = return_time(b, {0.0, 0.5}, 1);
    auto verdict = classify_pair(a, b, 1e-4);
    bool witness_is_period = verdict.witness.rfind("period", 0) == 0;
    bool ok = std::abs(period - kPi) < tol::period && std::abs(ode - kPi) < tol::period && !verdict.equivalent &&
              witness_is_period;
    return {ok, fmt::format("period={:.10f} (flow oracle {:.10f}); classify: {}", period, ode,
                            verdict.equivalent ? "equivalent" : "not equivalent, witness '" + verdict.witness + "'")};
}

Outcome asymmetric_sphere() {
    auto s = SurfaceStructure::make(Topology::Sphere, "h*(2 + h)/2");
    auto v = regularized_volume(s);
    double oracle = sphere_volume_oracle([](double h) { return 2.0 / (h * (2.0 + h)); });
    double exact = 2 * kPi * std::log(3.0);
    bool ok = std::abs(v.volume - exact) < tol::asym_volume && std::abs(oracle - exact) < tol::asym_volume &&
              std::abs(v.log_coefficient) < tol::log_coefficient;
    return {ok, fmt::format("volume={:.10f} principal-value oracle={:.10f} 2pi log 3={:.10f} |c|={:.2e}", v.volume,
                            oracle, exact, std::abs(v.log_coefficient))};
}

Outcome cohomology_corollary() {
    auto t0 = Clock::now();
    bool anchors = surface_poisson_cohomology(0, 1) == std::array<int, 3>{1, 1, 2} &&
                   surface_poisson_cohomology(1, 2) == std::array<int, 3>{1, 4, 3};
    int mismatches = 0, cases = 0;
    for (int g = 0; g <= 10; ++g) {
        for (int n = 1; n <= 10; ++n) {
            BettiData data{2, surface_betti(g), std::vector<std::vector<int>>(static_cast<std::size_t>(n), {1, 1})};
            auto formula = surface_poisson_cohomology(g, n);
            auto bb = b_betti(data);
            auto pb = poisson_betti(data);
            ++cases;
            for (std::size_t k = 0; k < 3; ++k) {
                if (bb.at(k) != formula[k] || pb.at(k) != formula[k]) {
                    ++mismatches;
                    break;
                }
            }
        }
    }
    double secs = seconds_since(t0);
    bool ok = anchors && mismatches == 0 && secs < tol::cohomology_seconds;
    return {ok, fmt::format("(0,1)->(1,1,2) and (1,2)->(1,4,3): {}; {} (g,n) pairs, {} mismatches; {:.3f}s",
                            anchors ? "yes" : "no", cases, mismatches, secs)};
}

// ---------------------------------------------------------------- property suite

struct PropertyTally {
    std::string name;
    int cases = 0;
    int failures = 0;
    double worst = 0.0;
};

PropertyTally prop_dd() {
    PropertyTally t{"d o d = 0"};
    Patch p = box_patch({"x", "y", "z"});
    RandomExpr gen(p, 1011);
    for (int k = 0; k < tol::property_cases; ++k, ++t.cases) {
        int deg = gen.uniform_int(1, 2);
        BForm w(gen.form(deg - 1, 2), gen.form(deg, 2), parse_expr("x + y^2/4", p));
        BForm dd = d(d(w));
        if (!form_is_zero(dd.alpha()) || !form_is_zero(dd.beta())) ++t.failures;
    }
    return t;
}

PropertyTally prop_leibniz() {
    PropertyTally t{"graded Leibniz"};
    Patch p = box_patch({"x", "y", "z"});
    RandomExpr gen(p, 1012);
    Expr f = parse_expr("y + x^2/3", p);
    for (int k = 0; k < tol::property_cases; ++k, ++t.cases) {
        int k1 = gen.uniform_int(1, 2);
        BForm a(gen.form(k1 - 1, 1), gen.form(k1, 1), f);
        BForm b(gen.form(0, 1), gen.form(1, 1), f);
        BForm lhs = d(wedge(a, b));
        BForm rhs = wedge(d(a), b) + wedge(a, d(b)).scaled(Expr::integer(k1 % 2 ? -1 : 1));
        if (!forms_equiv(lhs.alpha(), rhs.alpha()) || !forms_equiv(lhs.beta(), rhs.beta())) ++t.failures;
    }
    return t;
}

PropertyTally prop_dualize() {
    PropertyTally t{"dualize round trip"};
    Patch p = box_patch({"x1", "y1", "x2", "y2"});
    RandomExpr gen(p, 1013);
    Grid grid = make_grid(p, GridSpec{4, 256});
    while (t.cases < tol::property_cases) {
        SmoothForm beta(p, 2);
        for (const auto& idx : basis_indices(4, 2)) {
            if (gen.uniform_int(0, 1)) beta.accumulate(idx, Expr::rational(1, 5) * gen.smooth(1));
        }
        beta.accumulate({2, 3}, Expr::integer(2));
        SmoothForm alpha(p, 1);
        alpha.accumulate({0}, Expr::integer(2));
        for (int i : {2, 3}) {
            if (gen.uniform_int(0, 1)) alpha.accumulate({i}, Expr::rational(1, 5) * gen.smooth(1));
        }
        CompiledBForm2 cw(BForm(alpha, beta, Expr::coord("y1")));
        double err = 0.0;
        bool usable = true;
        for (std::size_t i = 0; i < grid.size() && usable; ++i) {
            Eigen::MatrixXd W = cw.matrix(grid.point(i), 1);
            usable = std::abs(W.determinant()) >= 1e-4;
            if (usable) err = std::max(err, (dualize_matrix(dualize_matrix(W)) - W).cwiseAbs().maxCoeff());
        }
        if (!usable) continue;
        ++t.cases;
        t.worst = std::max(t.worst, err);
        if (err >= tol::dualize) ++t.failures;
    }
    return t;
}

PropertyTally prop_restriction() {
    PropertyTally t{"alpha~ invariance and beta~ covariance under f -> f h"};
    Patch p = box_patch({"x", "y", "z"});
    RandomExpr gen(p, 1014);
    for (int k = 0; k < tol::property_cases; ++k, ++t.cases) {
        BForm w(gen.form(1, 1), gen.form(2, 1), Expr::coord("z"));
        Expr h = Expr::integer(3) + sin(gen.smooth(1));
        auto base = restrict_to_Z(w);
        auto moved = restrict_to_Z(w.with_defining_factor(h));
        if (base.size() != 1 || moved.size() != 1) {
            ++t.failures;
            continue;
        }
        SmoothForm dlog(p, 1);
        for (std::size_t i = 0; i < 3; ++i) dlog.accumulate({static_cast<int>(i)}, diff_expr(h, p.coord(i).name) / h);
        SmoothForm shift = wedge(base[0].alpha_tilde, restrict_form(dlog, base[0].graph, base[0].z_patch));
        if (!forms_equiv(base[0].alpha_tilde, moved[0].alpha_tilde) ||
            !forms_equiv(moved[0].beta_tilde, base[0].beta_tilde - shift))
            ++t.failures;
    }
    return t;
}

SurfaceStructure random_sphere(RandomExpr& gen) {
    int k = gen.uniform_int(1, 2);
    Expr amp = Expr::rational(gen.uniform_int(0, 4), 10);
    Expr shape = Expr::coord("h") - amp * sin(Expr::integer(k) * Expr::coord("theta") + Expr::rational(gen.uniform_int(0, 6), 3));
    Expr bump = Expr::integer(2) + sin(Expr::coord("h") + cos(Expr::integer(gen.uniform_int(1, 2)) * Expr::coord("theta")));
    SurfaceStructure s;
    s.topology = Topology::Sphere;
    s.patch = sphere_chart();
    s.P = normalize(shape * bump);
    s.V = normalize(Expr::integer(2) + cos(Expr::coord("h") * Expr::coord("theta")));
    return s;
}

PropertyTally prop_modular_covariance() {
    PropertyTally t{"modular field under V -> V H"};
    Patch p = sphere_chart();
    RandomExpr gen(p, 1015);
    for (int k = 0; k < tol::property_cases; ++k, ++t.cases) {
        SurfaceStructure s = random_sphere(gen);
        Expr H = Expr::integer(3) + sin(gen.smooth(2));
        VectorField2 X = modular_field(s.P, s.V, p);
        VectorField2 Y = modular_field(s.P, s.V * H, p);
        VectorField2 u = hamiltonian_field(s.P, log(abs(H)), p);
        if (!expr_equiv(Y.x1 - X.x1, u.x1, p) || !expr_equiv(Y.x2 - X.x2, u.x2, p)) ++t.failures;
    }
    return t;
}

PropertyTally prop_alpha_tilde_on_X() {
    PropertyTally t{"alpha~(X|Z) = 1"};
    RandomExpr gen(sphere_chart(), 1016);
    SurfaceOptions opts;
    opts.grid = 32;
    for (int k = 0; k < tol::property_cases; ++k, ++t.cases) {
        SurfaceStructure s = random_sphere(gen);
        auto curves = extract_zero_set(s, opts);
        if (curves.size() != 1) {
            ++t.failures;
            continue;
        }
        VectorField2 X = modular_field(s);
        BForm w = dual_bform(s);
        CompiledExpr X1(X.x1, s.patch), X2(X.x2, s.patch);
        CompiledExpr a1(w.alpha().coeff({0}), s.patch), a2(w.alpha().coeff({1}), s.patch);
        double err = 0.0;
        for (const auto& x : curves[0].points) err = std::max(err, std::abs(a1(x) * X1(x) + a2(x) * X2(x) - 1.0));
        t.worst = std::max(t.worst, err);
        if (err >= tol::alpha_tilde_on_X) ++t.failures;
    }
    return t;
}

Outcome property_suite() {
    std::vector<PropertyTally> all{prop_dd(),         prop_leibniz(),           prop_dualize(),
                                   prop_restriction(), prop_modular_covariance(), prop_alpha_tilde_on_X()};
    bool ok = true;
    std::string detail;
    for (const auto& t : all) {
        ok = ok && t.failures == 0 && t.cases >= tol::property_cases;
        detail += fmt::format("{}{}: {}/{}", detail.empty() ? "" : "; ", t.name, t.cases - t.failures, t.cases);
        if (t.worst > 0) detail += fmt::format(" (worst {:.1e})", t.worst);
    }
    return {ok, detail};
}

// ---------------------------------------------------------------- normal forms

Outcome darboux() {
    Patch p = box_patch({"z1", "z2"});
    SmoothForm alpha(p, 1);
    alpha.accumulate({1}, parse_expr("-(1 + z2^2)", p));
    BForm w(alpha, SmoothForm(p, 2), Expr::coord("z1"));
    auto r = darboux2d(w);
    bool t_ok = r.t && expr_equiv(*r.t, parse_expr("z2 + z2^3/3", p), p);
    bool ok = t_ok && r.symbolic_identity && r.grid == 64 && r.max_residual < tol::darboux_residual;
    return {ok, fmt::format("t={} symbolic pullback identity={} residual={:.2e} on {}^2", r.t ? r.t->str() : "none",
                            r.symbolic_identity, r.max_residual, r.grid)};
}

Outcome moser() {
    auto t0 = Clock::now();
    Patch p = box_patch({"x", "y"});
    BForm w0(SmoothForm::differential(p, 0), SmoothForm(p, 2), Expr::coord("y"));
    SmoothForm bump(p, 2);
    bump.accumulate({0, 1}, Expr::coord("y"));
    BForm w1(SmoothForm::differential(p, 0), bump, Expr::coord("y"));
    MoserOptions o;
    o.grid = 64;
    o.step = 1.0 / 256;
    auto r = moser_relative_verify(w0, w1, o);
    MoserOptions base;
    base.grid = 16;
    base.step = 1.0 / 8;
    auto c = moser_convergence(w0, w1, base);
    double secs = seconds_since(t0);
    bool ok = r.max_residual < tol::moser_residual && r.vfield_on_Z_max < tol::moser_on_Z && c.order >= tol::moser_order &&
              secs < tol::moser_seconds;
    return {ok, fmt::format("residual={:.2e} at {}^2/step 1/{}; |v| on Z={:.1e}; order={:.2f} ({:.2e} -> {:.2e}); {:.1f}s",
                            r.max_residual, r.grid, r.steps, r.vfield_on_Z_max, c.order, c.coarse.max_residual,
                            c.fine.max_residual, secs)};
}

// ---------------------------------------------------------------- extension

HypersurfaceData t3_data() {
    std::vector<Coordinate> cs;
    for (int i = 1; i <= 3; ++i) cs.push_back(Coordinate{"theta" + std::to_string(i), 0.0, 2 * kPi, 2 * kPi});
    Patch p(cs, {"a", "b"});
    SmoothForm alpha(p, 1);
    alpha.accumulate({0}, parse_expr("a/(a^2 + b^2 + 1)", p));
    alpha.accumulate({1}, parse_expr("b/(a^2 + b^2 + 1)", p));
    alpha.accumulate({2}, parse_expr("-1/(a^2 + b^2 + 1)", p));
    SmoothForm omega(p, 2);
    omega.accumulate({0, 1}, Expr::integer(1));
    omega.accumulate({0, 2}, parse_expr("b", p));
    omega.accumulate({1, 2}, parse_expr("-a", p));
    return HypersurfaceData{p, alpha, omega, Bindings{{"a", std::sqrt(2.0)}, {"b", std::exp(1.0)}}};
}

Outcome extension() {
    auto t0 = Clock::now();
    auto data = t3_data();
    auto rep = check_defining_forms(data);
    SmoothForm vol = leafwise_volume(data);
    bool volume_ok = is_zero_expr(vol.coeff({0, 1, 2}) + Expr::integer(1), data.patch);
    auto m = build_extension(data, 1.0);
    bool closed = form_is_zero(d(m.form).times_f());
    auto nd = nondegeneracy_check(m.form, GridSpec{12, 20736}, data.params, 1e-8);
    auto sine = build_sine_extension(data, "theta4");
    auto tr = transversality_check(sine.form.f(), sine.patch, GridSpec{16, 65536}, 1e-6, data.params);
    double secs = seconds_since(t0);
    bool ok = rep.all_pass && volume_ok && closed && nd.nondegenerate && tr.regular && tr.components.size() == 2 &&
              secs < tol::extension_seconds;
    return {ok, fmt::format("defining checks {}; alpha^omega = -dtheta123: {}; d(omega~)=0: {}; nondegenerate: {} "
                            "(min {:.3f}); T4 sine: regular={} components={}; {:.2f}s",
                            rep.all_pass ? "all pass" : "FAILED", volume_ok, closed, nd.nondegenerate, nd.min_abs,
                            tr.regular, tr.components.size(), secs)};
}

Outcome s3_rejected() {
    BettiData data{4, torus_betti(4), {sphere_betti(3)}};
    auto r = nonvanishing_witness(data);
    std::string failed;
    for (const auto& c : r.checks) {
        if (!c.ok) failed += (failed.empty() ? "" : ", ") + c.name;
    }
    return {!r.consistent, fmt::format("Z = S3 in T4: consistent={} failed checks: {}", r.consistent, failed)};
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        Outcome (*run)();
    };
    const Criterion criteria[] = {
        {"sphere model invariants", sphere_model},
        {"scaled sphere period and classify witness", scaled_sphere},
        {"asymmetric sphere regularized volume", asymmetric_sphere},
        {"surface Poisson cohomology formulas", cohomology_corollary},
        {"randomized property suite", property_suite},
        {"darboux2d on (1 + z2^2)/z1", darboux},
        {"relative Moser on the perturbed plane", moser},
        {"T3 extension and T4 sine variant", extension},
        {"S3 hypersurface rejected", s3_rejected},
    };
    int failures = 0, index = 0;
    for (const auto& c : criteria) {
        ++index;
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += o.pass ? 0 : 1;
        fmt::print("[{}] {}. {}: {}\n", o.pass ? "PASS" : "FAIL", index, c.name, o.detail);
        std::fflush(stdout);
    }
    fmt::print("{}/{} criteria passed\n", index - failures, index);
    return failures == 0 ? 0 : 1;
}
