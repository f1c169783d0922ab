#include "bgeo/forms.hpp"
#include "doctest.h"
#include "random_expr.hpp"

#include <cmath>
#include <numbers>

using namespace bgeo;
using bgeo::testing::box_patch;
using bgeo::testing::RandomExpr;

namespace {

constexpr double kTwoPi = 2 * std::numbers::pi;

SmoothForm one(const Patch& p, std::initializer_list<std::pair<int, const char*>> terms) {
    SmoothForm w(p, 1);
    for (auto [i, c] : terms) w.accumulate({i}, parse_expr(c, p));
    return w;
}

SmoothForm two(const Patch& p, std::initializer_list<std::tuple<int, int, const char*>> terms) {
    SmoothForm w(p, 2);
    for (auto [i, j, c] : terms) w.accumulate({i, j}, parse_expr(c, p));
    return w;
}

Patch torus(int n, std::vector<std::string> params = {}) {
    std::vector<Coordinate> cs;
    for (int i = 1; i <= n; ++i) cs.push_back(Coordinate{"theta" + std::to_string(i), 0.0, kTwoPi, kTwoPi});
    return Patch(cs, params);
}

BForm standard4() {
    Patch p = box_patch({"x1", "y1", "x2", "y2"});
    return BForm(one(p, {{0, "1"}}), two(p, {{2, 3, "1"}}), parse_expr("y1", p));
}

}  // namespace

TEST_CASE("wedge of basis forms") {
    Patch p = box_patch({"x1", "y1", "x2", "y2"});
    SmoothForm w = wedge(two(p, {{0, 1, "1"}}), two(p, {{2, 3, "1"}}));
    CHECK(w.degree() == 4);
    CHECK(w.coeff({0, 1, 2, 3}).is_one());
    SmoothForm dxdx = wedge(SmoothForm::differential(p, 0), SmoothForm::differential(p, 0));
    CHECK(dxdx.is_structurally_zero());
    SmoothForm swapped = wedge(SmoothForm::differential(p, 1), SmoothForm::differential(p, 0));
    CHECK(swapped.coeff({0, 1}) == Expr::integer(-1));
}

TEST_CASE("square of the standard b-symplectic form") {
    BForm w = standard4();
    BForm sq = power(w, 2);
    // 2 dx1 ^ dy1/y1 ^ dx2 ^ dy2
    CHECK(sq.beta().is_structurally_zero());
    CHECK(sq.alpha().coeff({0, 2, 3}) == Expr::integer(2));
    SmoothForm top = sq.times_f();
    CHECK(top.coeff({0, 1, 2, 3}) == Expr::integer(2));
}

TEST_CASE("T3 defining forms: alpha ^ omega = -dtheta123") {
    Patch p = torus(3, {"a", "b"});
    const char* s = "(a^2+b^2+1)";
    std::string a1 = std::string("a/") + s, a2 = std::string("b/") + s, a3 = std::string("-1/") + s;
    SmoothForm alpha = one(p, {{0, a1.c_str()}, {1, a2.c_str()}, {2, a3.c_str()}});
    SmoothForm omega = two(p, {{0, 1, "1"}, {0, 2, "b"}, {1, 2, "-a"}});
    SmoothForm aw = wedge(alpha, omega);
    CHECK(expr_equiv(aw.coeff({0, 1, 2}), Expr::integer(-1), p));
    CHECK(d(alpha).is_structurally_zero());
    CHECK(d(omega).is_structurally_zero());
}

TEST_CASE("exterior derivative examples") {
    Patch p = box_patch({"x", "y"});
    SmoothForm w = d(one(p, {{0, "y"}}));
    CHECK(w.coeff({0, 1}) == Expr::integer(-1));
    CHECK(d(SmoothForm::differential(p, 0)).is_structurally_zero());
    Patch q = box_patch({"x1", "y1"});
    BForm b(SmoothForm::function(q, parse_expr("x1", q)), SmoothForm(q, 1), parse_expr("y1", q));
    BForm db = d(b);
    CHECK(db.alpha().coeff({0}).is_one());
    CHECK(d(standard4()).alpha().is_structurally_zero());
    CHECK(d(standard4()).beta().is_structurally_zero());
    // d of y dx ^ df/f with f = x vanishes
    Patch r = box_patch({"x", "y"});
    BForm c(one(r, {{0, "y"}}), SmoothForm(r, 2), parse_expr("x", r));
    BForm dc = d(c);
    CHECK(form_is_zero(dc.times_f()));
}

TEST_CASE("restriction to Z") {
    BForm w = standard4();
    auto pairs = restrict_to_Z(w);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].graph.coord == 1);
    CHECK(pairs[0].z_patch.dim() == 3);
    CHECK(pairs[0].alpha_tilde.coeff({0}).is_one());
    CHECK(pairs[0].beta_tilde.coeff({1, 2}).is_one());

    Patch p = box_patch({"x1", "y1", "x2", "y2"});
    BForm smooth = BForm::from_smooth(two(p, {{0, 2, "x1 + y1"}}), parse_expr("y1", p));
    auto sp = restrict_to_Z(smooth);
    REQUIRE(sp.size() == 1);
    CHECK(sp[0].alpha_tilde.is_structurally_zero());
    CHECK(sp[0].beta_tilde.coeff({0, 1}) == Expr::coord("x1"));

    Expr h = parse_expr("2 + sin(x2)", p);
    BForm wh = w.with_defining_factor(h);
    auto ph = restrict_to_Z(wh);
    REQUIRE(ph.size() == 1);
    CHECK(forms_equiv(ph[0].alpha_tilde, pairs[0].alpha_tilde));
    SmoothForm shift = wedge(pairs[0].alpha_tilde, restrict_form(one(p, {{2, "cos(x2)/(2+sin(x2))"}}), pairs[0].graph, pairs[0].z_patch));
    CHECK(forms_equiv(ph[0].beta_tilde, pairs[0].beta_tilde - shift));
}

TEST_CASE("is_smooth") {
    Patch p = box_patch({"x1", "y1"});
    BForm w(one(p, {{0, "y1"}}), SmoothForm(p, 2), parse_expr("y1", p));
    auto r = is_smooth(w);
    REQUIRE(r.status == SmoothStatus::Smooth);
    CHECK(expr_equiv(r.form->coeff({0, 1}), Expr::integer(1), p));

    auto s = is_smooth(standard4());
    CHECK(s.status == SmoothStatus::NotSmooth);
    CHECK_FALSE(s.form.has_value());

    BForm w0(one(p, {{0, "1"}}), SmoothForm(p, 2), parse_expr("y1", p));
    BForm w1 = w0 + BForm(one(p, {{0, "y1"}}), SmoothForm(p, 2), parse_expr("y1", p));
    auto diff = is_smooth(w0 - w1);
    CHECK(diff.status == SmoothStatus::Smooth);
}

TEST_CASE("nondegeneracy") {
    auto r = nondegeneracy_check(standard4(), GridSpec{12, 30000});
    CHECK(r.nondegenerate);
    CHECK(r.symbolic_verdict == "nonzero constant");
    CHECK(r.min_abs == doctest::Approx(2.0));

    Patch p = box_patch({"x1", "y1"});
    BForm flat = BForm::from_smooth(two(p, {{0, 1, "1"}}), parse_expr("y1", p));
    auto f = nondegeneracy_check(flat, GridSpec{33, 10000});
    CHECK_FALSE(f.nondegenerate);
    CHECK(f.min_abs < 1e-12);

    CHECK_THROWS_AS(nondegeneracy_check(BForm::from_smooth(SmoothForm(box_patch({"x", "y", "z"}), 2), Expr::coord("x"))), FormError);
}

TEST_CASE("transversality") {
    Patch sp({Coordinate{"h", -1, 1, std::nullopt}, Coordinate{"theta", 0, kTwoPi, kTwoPi}});
    auto r = transversality_check(parse_expr("h", sp), sp);
    CHECK(r.regular);
    CHECK(r.components.size() == 1);
    auto sq = transversality_check(parse_expr("h^2", sp), sp);
    CHECK_FALSE(sq.regular);
    CHECK(sq.degenerate_zero);
    Patch t4 = torus(4);
    auto s = transversality_check(parse_expr("sin(theta4)", t4), t4, GridSpec{12, 30000});
    CHECK(s.regular);
    CHECK(s.components.size() == 2);
    auto none = transversality_check(parse_expr("h - 2", sp), sp);
    CHECK_FALSE(none.nonempty);
}

TEST_CASE("zero set graphs") {
    Patch t4 = torus(4);
    auto gs = zero_set_graphs(parse_expr("sin(theta4)", t4), t4);
    REQUIRE(gs.size() == 2);
    CHECK(gs[0].numeric);
    CHECK(gs[0].phi.const_value().value() == doctest::Approx(0.0));
    CHECK(gs[1].phi.const_value().value() == doctest::Approx(std::numbers::pi));
    Patch p = box_patch({"x", "y"});
    auto lin = zero_set_graphs(parse_expr("y - x^2/2", p), p);
    REQUIRE(lin.size() == 1);
    CHECK(lin[0].coord == 1);
    CHECK_FALSE(lin[0].numeric);
    CHECK_THROWS_AS(zero_set_graphs(parse_expr("x^2 + y^2 - 1/4", p), p), FormError);
}

TEST_CASE("dualize examples") {
    Patch p = box_patch({"x", "y"});
    BForm w(one(p, {{0, "1"}}), SmoothForm(p, 2), parse_expr("y", p));
    BMultivector pi = dualize(w);
    auto cc = pi.coordinate_components();
    CHECK(expr_equiv(cc.at({0, 1}), parse_expr("y", p), p));
    BForm back = dualize(pi);
    CHECK(bforms_equiv(back, w));

    BForm w2 = w.scaled(Expr::integer(2));
    auto cc2 = dualize(w2).coordinate_components();
    CHECK(expr_equiv(cc2.at({0, 1}), parse_expr("y/2", p), p));

    // standard 4-D form: Pi = y1 dx1 ^ dy1 + dx2 ^ dy2 as bivector
    auto c4 = dualize(standard4()).coordinate_components();
    Patch q = standard4().patch();
    CHECK(expr_equiv(c4.at({0, 1}), parse_expr("y1", q), q));
    CHECK(expr_equiv(c4.at({2, 3}), Expr::integer(1), q));
    CHECK(c4.count({0, 2}) == 0);

    BForm flat = BForm::from_smooth(two(p, {{0, 1, "1"}}), parse_expr("y", p));
    CHECK_THROWS_AS(dualize(flat), FormError);
}

TEST_CASE("symbolic inverse agrees with LU") {
    Patch p = box_patch({"a", "b", "c", "e"});
    RandomExpr gen(p, 99);
    for (int k = 0; k < 20; ++k) {
        SmoothForm beta(p, 2);
        for (const auto& idx : basis_indices(4, 2)) beta.accumulate(idx, gen.smooth(2));
        beta.accumulate({0, 1}, Expr::integer(3));
        beta.accumulate({2, 3}, Expr::integer(3));
        BForm w(SmoothForm(p, 1), beta, Expr::integer(3) + Expr::coord("a"));
        auto x = gen.point();
        CompiledBForm2 cw(w);
        Eigen::MatrixXd W = cw.matrix(x, 0);
        if (std::abs(W.determinant()) < 1e-3) continue;
        BMultivector pi = dualize(w, DualizeOptions{GridSpec{2, 16}, 1e-14, 0});
        Eigen::MatrixXd P = pi.frame_matrix(x);
        CHECK((P - dualize_matrix(W)).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("property: d o d = 0 on b-forms") {
    Patch p = box_patch({"x", "y", "z"});
    RandomExpr gen(p, 11);
    for (int k = 0; k < 200; ++k) {
        int deg = gen.uniform_int(0, 1);
        BForm w(gen.form(deg - 1 < 0 ? -1 : deg - 1, 2), gen.form(deg, 2), Expr::coord("x"));
        if (deg == 0) w = BForm(SmoothForm(p, -1), gen.form(0, 2), Expr::coord("x"));
        BForm dd = d(d(w));
        CHECK(form_is_zero(dd.alpha()));
        CHECK(form_is_zero(dd.beta()));
    }
}

TEST_CASE("property: graded Leibniz") {
    Patch p = box_patch({"x", "y", "z"});
    RandomExpr gen(p, 12);
    Expr f = parse_expr("y + x^2/3", p);
    for (int k = 0; k < 200; ++k) {
        int k1 = gen.uniform_int(1, 2);
        BForm a(gen.form(k1 - 1, 1), gen.form(k1, 1), f);
        BForm b(gen.form(0, 1), gen.form(1, 1), f);
        BForm lhs = d(wedge(a, b));
        BForm rhs = wedge(d(a), b) + wedge(a, d(b)).scaled(Expr::integer(k1 % 2 ? -1 : 1));
        CHECK(forms_equiv(lhs.alpha(), rhs.alpha()));
        CHECK(forms_equiv(lhs.beta(), rhs.beta()));
    }
}

TEST_CASE("property: dualize round trip") {
    Patch p = box_patch({"x1", "y1", "x2", "y2"});
    RandomExpr gen(p, 13);
    int done = 0;
    for (int k = 0; k < 200; ++k) {
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
        BForm w(alpha, beta, Expr::coord("y1"));
        CompiledBForm2 cw(w);
        Grid grid = make_grid(p, GridSpec{4, 256});
        double max_err = 0.0;
        bool ok = true;
        for (std::size_t i = 0; i < grid.size() && ok; ++i) {
            auto x = grid.point(i);
            Eigen::MatrixXd W = cw.matrix(x, 1);
            if (std::abs(W.determinant()) < 1e-4) {
                ok = false;
                break;
            }
            Eigen::MatrixXd back = dualize_matrix(dualize_matrix(W));
            max_err = std::max(max_err, (back - W).cwiseAbs().maxCoeff());
        }
        if (!ok) continue;
        ++done;
        CHECK(max_err < 1e-10);
    }
    CHECK(done >= 150);
}

TEST_CASE("property: restriction under change of defining function") {
    Patch p = box_patch({"x", "y", "z"});
    RandomExpr gen(p, 14);
    Expr f = Expr::coord("z");
    for (int k = 0; k < 200; ++k) {
        BForm w(gen.form(1, 1), gen.form(2, 1), f);
        Expr h = Expr::integer(3) + sin(gen.smooth(1));
        auto base = restrict_to_Z(w);
        auto moved = restrict_to_Z(w.with_defining_factor(h));
        REQUIRE(base.size() == 1);
        REQUIRE(moved.size() == 1);
        CHECK(forms_equiv(base[0].alpha_tilde, moved[0].alpha_tilde));
        SmoothForm dlog(p, 1);
        for (std::size_t i = 0; i < 3; ++i) dlog.accumulate({static_cast<int>(i)}, diff_expr(h, p.coord(i).name) / h);
        SmoothForm shift = wedge(base[0].alpha_tilde, restrict_form(dlog, base[0].graph, base[0].z_patch));
        CHECK(forms_equiv(moved[0].beta_tilde, base[0].beta_tilde - shift));
    }
}

TEST_CASE("property: is_smooth iff alpha restricts to zero") {
    Patch p = box_patch({"x", "y"});
    RandomExpr gen(p, 15);
    Expr f = Expr::coord("y");
    for (int k = 0; k < 200; ++k) {
        bool make_smooth = gen.uniform_int(0, 1) == 1;
        SmoothForm alpha = gen.form(1, 1);
        alpha = SmoothForm(p, 1);
        Expr c = gen.smooth(1);
        if (make_smooth) {
            alpha.accumulate({0}, Expr::coord("y") * c);
        } else {
            alpha.accumulate({0}, Expr::integer(2) + sin(c));
        }
        alpha.accumulate({1}, gen.smooth(1));
        BForm w(alpha, gen.form(2, 1), f);
        auto r = is_smooth(w);
        auto pair = restrict_to_Z(w);
        bool restricts_to_zero = form_is_zero(pair[0].alpha_tilde);
        CHECK(restricts_to_zero == make_smooth);
        CHECK((r.status == SmoothStatus::Smooth) == make_smooth);
        if (r.status == SmoothStatus::Smooth) CHECK(forms_equiv(r.form->scaled(f), w.times_f()));
    }
}
