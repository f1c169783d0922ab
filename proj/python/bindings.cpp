// Python bindings. Documents cross the boundary as JSON text; the bgeo
// package wraps them into dicts.
#include "bgeo/io.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace bgeo;

namespace {

Json doc(const std::string& text) { return Json::parse(text); }

std::string invariants(const std::string& surface, int grid) {
    SurfaceOptions opts;
    opts.grid = grid;
    return to_json(radko_invariants(surface_from_json(doc(surface)), opts), opts).dump();
}

std::string classify(const std::string& a, const std::string& b, double tol) {
    return to_json(classify_pair(surface_from_json(doc(a)), surface_from_json(doc(b)), tol), tol).dump();
}

std::string darboux(const std::string& form, int grid) {
    Bindings params;
    BForm w = bform_from_json(doc(form), &params);
    DarbouxOptions opts;
    opts.grid = grid;
    return to_json(darboux2d(w, opts, params)).dump();
}

std::string moser_relative(const std::string& a, const std::string& b, int grid, int steps) {
    Bindings params;
    BForm w0 = bform_from_json(doc(a), &params);
    BForm w1 = bform_from_json(doc(b));
    MoserOptions opts;
    opts.grid = grid;
    opts.step = 1.0 / steps;
    return to_json(moser_relative_verify(w0, w1, opts, params), opts).dump();
}

std::string defining_checks(const std::string& zdata, int grid) {
    return to_json(check_defining_forms(zdata_from_json(doc(zdata)), GridSpec{grid, 32768})).dump();
}

std::string extend(const std::string& zdata, double eps, const std::string& sine) {
    auto data = zdata_from_json(doc(zdata));
    return to_json(sine.empty() ? build_extension(data, eps) : build_sine_extension(data, sine)).dump();
}

std::string witness(const std::vector<int>& betti_m, const std::vector<std::vector<int>>& components) {
    BettiData data{static_cast<int>(betti_m.size()) - 1, betti_m, components};
    data.validate();
    return to_json(nonvanishing_witness(data)).dump();
}

BettiData betti_data(const std::vector<int>& betti_m, const std::vector<std::vector<int>>& components) {
    BettiData data{static_cast<int>(betti_m.size()) - 1, betti_m, components};
    data.validate();
    return data;
}

}  // namespace

PYBIND11_MODULE(_bgeo, m) {
    py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<CohomologyError>(m, "CohomologyError", PyExc_ValueError);
    py::register_exception<SurfaceError>(m, "SurfaceError", PyExc_RuntimeError);
    py::register_exception<NormalFormError>(m, "NormalFormError", PyExc_RuntimeError);
    py::register_exception<ExtensionError>(m, "ExtensionError", PyExc_RuntimeError);

    m.attr("SCHEMA") = kSchema;
    m.def("set_seed", &set_default_equiv_seed);
    m.def("normalize", [](const std::string& text, const std::vector<std::string>& coords) {
        std::vector<Coordinate> cs;
        for (const auto& c : coords) cs.push_back(Coordinate{c});
        return normalize(parse_expr(text, Patch(cs))).str();
    });
    m.def("invariants", &invariants, py::arg("surface"), py::arg("grid") = 64);
    m.def("classify", &classify, py::arg("a"), py::arg("b"), py::arg("tol") = 1e-4);
    m.def("darboux", &darboux, py::arg("form"), py::arg("grid") = 64);
    m.def("moser_relative", &moser_relative, py::arg("w0"), py::arg("w1"), py::arg("grid") = 64, py::arg("steps") = 256);
    m.def("defining_checks", &defining_checks, py::arg("zdata"), py::arg("grid") = 32);
    m.def("extend", &extend, py::arg("zdata"), py::arg("eps") = 1.0, py::arg("sine") = "");
    m.def("b_betti", [](const std::vector<int>& bm, const std::vector<std::vector<int>>& z) { return b_betti(betti_data(bm, z)); });
    m.def("poisson_betti",
          [](const std::vector<int>& bm, const std::vector<std::vector<int>>& z) { return poisson_betti(betti_data(bm, z)); });
    m.def("witness", &witness);
    m.def("surface_poisson_cohomology", &surface_poisson_cohomology);
}
