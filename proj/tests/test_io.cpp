#include "bgeo/io.hpp"
#include "doctest.h"
#include "random_expr.hpp"

using namespace bgeo;
using bgeo::testing::box_patch;

TEST_CASE("patch round trip keeps intervals and periods") {
    Json j = Json::parse(R"J({"coords": ["x", {"name": "th", "lo": 0, "hi": 6.5, "period": 6.5}], "params": ["a"]})J");
    Patch p = patch_from_json(j);
    CHECK(p.dim() == 2);
    CHECK(p.coord(0).lo == -1.0);
    CHECK(p.coord(1).period == 6.5);
    CHECK(p.is_param("a"));
    CHECK(patch_from_json(to_json(p)) == p);
}

TEST_CASE("b-form round trip") {
    Json j = Json::parse(R"J({
      "schema": "bgeo/1",
      "patch": {"coords": ["x", "y"]},
      "f": "y*(1 + x^2)",
      "alpha": {"(0)": "1 + a*y"},
      "beta": {"0,1": "sin(x)"},
      "params": {"a": 0.5}
    })J");
    Bindings params;
    BForm w = bform_from_json(j, &params);
    CHECK(params.at("a") == 0.5);
    CHECK(w.degree() == 2);
    CHECK(expr_equiv(w.f(), parse_expr("y + x^2*y", w.patch()), w.patch()));
    BForm back = bform_from_json(to_json(w));
    CHECK(forms_equiv(back.alpha(), w.alpha()));
    CHECK(forms_equiv(back.beta(), w.beta()));
    CHECK(back.f() == w.f());
}

TEST_CASE("property: random smooth forms survive serialization") {
    Patch p = box_patch({"x", "y", "z"});
    bgeo::testing::RandomExpr gen(p, 31);
    for (int k = 0; k < 200; ++k) {
        int deg = gen.uniform_int(0, 3);
        SmoothForm w = gen.form(deg, 2);
        SmoothForm back = form_from_json(Json::parse(to_json(w).dump()), p, deg);
        CHECK(forms_equiv(back, w));
    }
}

TEST_CASE("surface and hypersurface documents") {
    auto s = surface_from_json(Json::parse(R"J({"topology": "sphere", "P": "h*(2+h)/2"})J"));
    CHECK(s.topology == Topology::Sphere);
    auto again = surface_from_json(to_json(s));
    CHECK(again.P == s.P);
    CHECK(again.V == s.V);

    auto z = zdata_from_json(Json::parse(R"J({
      "patch": {"coords": ["t1", "t2", "t3"]},
      "alpha": {"2": "c"},
      "omega": {"0,1": "1"},
      "params": {"c": 2}
    })J"));
    CHECK(z.params.at("c") == 2.0);
    CHECK(z.patch.is_param("c"));
    CHECK(z.alpha.degree() == 1);
}

TEST_CASE("malformed input is reported") {
    CHECK_THROWS_AS(check_schema(Json::parse(R"J({"schema": "bgeo/2"})J")), InputError);
    CHECK_NOTHROW(check_schema(Json::parse(R"J({"topology": "sphere"})J")));
    CHECK_THROWS(surface_from_json(Json::parse(R"J({"topology": "sphere"})J")));
    CHECK_THROWS(bform_from_json(Json::parse(R"J({"patch": {"coords": ["x"]}, "f": "x", "beta": {"0,1": "1"}})J")));
    CHECK_THROWS_AS(read_json_file("/nonexistent/file.json"), InputError);
}
