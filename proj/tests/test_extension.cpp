#include "bgeo/extension.hpp"
#include "doctest.h"
#include "random_expr.hpp"

#include <cmath>
#include <numbers>

using namespace bgeo;
using bgeo::testing::box_patch;
using bgeo::testing::RandomExpr;

namespace {

constexpr double kTwoPi = 2 * std::numbers::pi;

Patch torus3() {
    std::vector<Coordinate> cs;
    for (int i = 1; i <= 3; ++i) cs.push_back(Coordinate{"theta" + std::to_string(i), 0.0, kTwoPi, kTwoPi});
    return Patch(cs, {"a", "b"});
}

HypersurfaceData t3_data(double a = std::sqrt(2.0), double b = std::exp(1.0)) {
    Patch p = torus3();
    SmoothForm alpha(p, 1);
    alpha.accumulate({0}, parse_expr("a/(a^2 + b^2 + 1)", p));
    alpha.accumulate({1}, parse_expr("b/(a^2 + b^2 + 1)", p));
    alpha.accumulate({2}, parse_expr("-1/(a^2 + b^2 + 1)", p));
    SmoothForm omega(p, 2);
    omega.accumulate({0, 1}, Expr::integer(1));
    omega.accumulate({0, 2}, parse_expr("b", p));
    omega.accumulate({1, 2}, parse_expr("-a", p));
    return HypersurfaceData{p, alpha, omega, Bindings{{"a", a}, {"b", b}}};
}

}  // namespace

TEST_CASE("T3 defining forms pass and alpha ^ omega is minus the volume") {
    auto data = t3_data();
    auto rep = check_defining_forms(data);
    CHECK(rep.all_pass);
    CHECK(rep.checks.size() == 4);
    SmoothForm vol = leafwise_volume(data);
    CHECK(is_zero_expr(vol.coeff({0, 1, 2}) + Expr::integer(1), data.patch));
    // any a, b
    for (double a : {0.3, -1.7}) {
        for (double b : {0.0, 2.5}) CHECK(check_defining_forms(t3_data(a, b), {12, 2000}).all_pass);
    }
}

TEST_CASE("exact alpha on T3 vanishes somewhere") {
    auto data = t3_data();
    SmoothForm alpha(data.patch, 1);
    alpha.accumulate({0}, parse_expr("cos(theta1)", data.patch));
    data.alpha = alpha;
    auto rep = check_defining_forms(data);
    CHECK_FALSE(rep.all_pass);
    CHECK_FALSE(rep.checks[0].ok);
    CHECK(rep.checks[1].ok);
    CHECK(rep.checks[0].witness.size() == 3);
    CHECK_THROWS_AS(build_extension(data), ExtensionError);
}

TEST_CASE("non-closed omega fails") {
    auto data = t3_data();
    data.omega.accumulate({0, 1}, parse_expr("sin(theta3)", data.patch));
    auto rep = check_defining_forms(data);
    CHECK_FALSE(rep.all_pass);
    CHECK_FALSE(rep.checks[2].ok);
}

TEST_CASE("T3 extension is b-symplectic and restricts to the data") {
    auto data = t3_data();
    auto m = build_extension(data, 1.0);
    CHECK(m.patch.dim() == 4);
    CHECK(m.form.f() == Expr::coord("t"));
    CHECK(m.provenance.size() == 4);
    auto rs = restrict_to_Z(m.form, data.params);
    REQUIRE(rs.size() == 1);
    CHECK(forms_equiv(rehome(BForm(rs[0].alpha_tilde, rs[0].beta_tilde, Expr::integer(1)), data.patch).alpha(), data.alpha));
    // top power: f * w^2 = 2 (alpha ^ omega) ^ dt
    SmoothForm top = power(m.form, 2).times_f();
    CHECK(is_zero_expr(top.coeff({0, 1, 2, 3}) - Expr::integer(2) * leafwise_volume(data).coeff({0, 1, 2}), m.patch));
}

TEST_CASE("circle data gives the planar model") {
    Patch p({Coordinate{"theta", 0.0, kTwoPi, kTwoPi}});
    HypersurfaceData data{p, SmoothForm::differential(p, 0), SmoothForm(p, 2), {}};
    auto m = build_extension(data, 0.5);
    CHECK(m.form.alpha().coeff({0}).is_one());
    CHECK(m.form.beta().is_structurally_zero());
    SmoothForm top = m.form.times_f();
    CHECK(top.coeff({0, 1}).is_one());
}

TEST_CASE("T4 sine extension has two copies of T3") {
    auto data = t3_data();
    auto m = build_sine_extension(data, "theta4");
    CHECK(m.kind == ExtensionKind::Sine);
    auto rs = restrict_to_Z(m.form, data.params);
    CHECK(rs.size() == 2);
    // the form equals (1/sin) dtheta4 ^ p*alpha + p*omega away from Z
    CompiledBForm2 cw(m.form, data.params);
    std::vector<double> x{0.3, 1.1, 2.0, 0.7};
    Eigen::MatrixXd W = cw.coordinate_matrix(x);
    auto av = data.alpha.values(std::span<const double>(x.data(), 3), data.params);
    auto ov = data.omega.values(std::span<const double>(x.data(), 3), data.params);
    CHECK(W(3, 0) == doctest::Approx(av[0] / std::sin(0.7)));
    CHECK(W(3, 2) == doctest::Approx(av[2] / std::sin(0.7)));
    CHECK(W(0, 1) == doctest::Approx(ov[0]));
    CHECK(W(1, 2) == doctest::Approx(ov[2]));
}

TEST_CASE("compare identical and rescaled extensions") {
    auto data = t3_data();
    auto m1 = build_extension(data, 1.0);
    auto same = compare_extensions(m1, m1, false);
    CHECK(same.same_restriction);
    CHECK(same.equivalent);

    auto m2 = build_extension(data, 0.5);
    auto v = compare_extensions(m1, m2, true);
    CHECK(v.same_restriction);
    REQUIRE(v.moser);
    CHECK(v.moser->max_residual < 1e-9);
    CHECK(v.equivalent);
}

TEST_CASE("compare against a smooth perturbation vanishing on Z") {
    auto data = t3_data();
    auto m1 = build_extension(data, 1.0);
    auto m2 = m1;
    SmoothForm dt = SmoothForm::differential(m1.patch, 3);
    SmoothForm pa = rehome(BForm(data.alpha, SmoothForm(data.patch, 2), Expr::integer(1)), m1.patch).alpha();
    m2.form = m1.form + BForm::from_smooth(wedge(dt, pa).scaled(Expr::coord("t")), Expr::coord("t"));
    auto v = compare_extensions(m1, m2, true);
    CHECK(v.same_restriction);
    REQUIRE(v.moser);
    MESSAGE("perturbed residual " << v.moser->max_residual << " collar " << v.moser->collar_radius);
    CHECK(v.moser->max_residual < 1e-4);
    CHECK(v.moser->vfield_on_Z_max < 1e-8);

    auto m3 = m1;
    m3.form = m1.form + BForm::from_smooth(wedge(SmoothForm::differential(m1.patch, 0), SmoothForm::differential(m1.patch, 1)),
                                           Expr::coord("t"));
    CHECK_FALSE(compare_extensions(m1, m3, false).same_restriction);
}

TEST_CASE("property: extensions of closed data are closed") {
    for (int trial = 0; trial < 200; ++trial) {
        Patch p = box_patch({"u", "v", "w"});
        RandomExpr gen(p, 9000 + trial);
        SmoothForm alpha = d(gen.form(0, 2));
        SmoothForm omega = d(gen.form(1, 2));
        Patch prod({p.coord(0), p.coord(1), p.coord(2), Coordinate{"t", -1, 1}});
        BForm w(rehome(BForm(alpha, omega, Expr::integer(1)), prod).alpha(),
                rehome(BForm(alpha, omega, Expr::integer(1)), prod).beta(), Expr::coord("t"));
        BForm dw = d(w);
        INFO("trial " << trial);
        CHECK(form_is_zero(dw.alpha()));
        CHECK(form_is_zero(dw.beta()));
        // top power identity in dims 3 + 1
        HypersurfaceData data{p, alpha, omega, {}};
        SmoothForm top = power(w, 2).times_f();
        CHECK(is_zero_expr(top.coeff({0, 1, 2, 3}) - Expr::integer(2) * leafwise_volume(data).coeff({0, 1, 2}), prod));
    }
}

TEST_CASE("property: planar top power identity in dims 1 + 1") {
    for (int trial = 0; trial < 50; ++trial) {
        Patch p = box_patch({"u"});
        RandomExpr gen(p, 777 + trial);
        SmoothForm alpha = d(gen.form(0, 3));
        Patch prod({p.coord(0), Coordinate{"t", -1, 1}});
        BForm w(rehome(BForm(alpha, SmoothForm(p, 2), Expr::integer(1)), prod).alpha(), SmoothForm(prod, 2), Expr::coord("t"));
        CHECK(is_zero_expr(w.times_f().coeff({0, 1}) - alpha.coeff({0}), prod));
    }
}
