#include "bgeo/io.hpp"

#include <boost/algorithm/string.hpp>
#include <boost/lexical_cast.hpp>
#include <fmt/format.h>

#include <fstream>

namespace bgeo {

namespace {

const Json& field(const Json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) throw InputError(fmt::format("missing field '{}'", key));
    return j.at(key);
}

std::string text_of(const Json& j) {
    if (j.is_string()) return j.get<std::string>();
    if (j.is_number()) return j.dump();
    throw InputError("expected an expression string, got " + j.dump());
}

Index parse_key(std::string key) {
    boost::trim(key);
    if (key.size() >= 2 && key.front() == '(' && key.back() == ')') key = key.substr(1, key.size() - 2);
    boost::trim(key);
    Index idx;
    if (key.empty()) return idx;
    std::vector<std::string> parts;
    boost::split(parts, key, boost::is_any_of(","));
    for (auto& p : parts) {
        boost::trim(p);
        try {
            idx.push_back(boost::lexical_cast<int>(p));
        } catch (const boost::bad_lexical_cast&) {
            throw InputError("bad index key '" + key + "'");
        }
    }
    return idx;
}

std::string key_of(const Index& idx) {
    std::string out;
    for (std::size_t i = 0; i < idx.size(); ++i) out += (i ? "," : "") + std::to_string(idx[i]);
    return out;
}

Bindings params_from_json(const Json& j) {
    Bindings b;
    if (!j.contains("params")) return b;
    const Json& pj = j.at("params");
    if (pj.is_array()) return b;
    for (auto it = pj.begin(); it != pj.end(); ++it) {
        if (!it.value().is_number()) throw InputError("parameter '" + it.key() + "' needs a numeric value");
        b[it.key()] = it.value().get<double>();
    }
    return b;
}

// Parameter values may sit in the patch ("params": {...}) or at top level;
// top-level names are added to the patch when it does not list any.
std::pair<Patch, Bindings> patch_and_params(const Json& j) {
    Json pj = field(j, "patch");
    Bindings params = params_from_json(pj);
    for (const auto& [k, v] : params_from_json(j)) params[k] = v;
    if (!params.empty() && (!pj.contains("params") || pj.at("params").empty())) {
        std::vector<std::string> names;
        for (const auto& [k, v] : params) names.push_back(k);
        pj["params"] = names;
    }
    return {patch_from_json(pj), params};
}

}  // namespace

Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw InputError("'" + path + "' is not valid JSON: " + e.what());
    }
}

void check_schema(const Json& j) {
    if (!j.is_object()) throw InputError("expected a JSON object");
    if (j.contains("schema") && j.at("schema") != kSchema) {
        throw InputError("unsupported schema " + j.at("schema").dump() + ", expected \"" + kSchema + "\"");
    }
}

Patch patch_from_json(const Json& j) {
    std::vector<Coordinate> cs;
    for (const auto& c : field(j, "coords")) {
        Coordinate co;
        if (c.is_string()) {
            co.name = c.get<std::string>();
        } else {
            co.name = field(c, "name").get<std::string>();
            co.lo = c.value("lo", -1.0);
            co.hi = c.value("hi", 1.0);
            if (c.contains("period") && !c.at("period").is_null()) co.period = c.at("period").get<double>();
        }
        cs.push_back(co);
    }
    std::vector<std::string> params;
    if (j.contains("params")) {
        const Json& pj = j.at("params");
        if (pj.is_array()) {
            for (const auto& p : pj) params.push_back(p.get<std::string>());
        } else {
            for (auto it = pj.begin(); it != pj.end(); ++it) params.push_back(it.key());
        }
    }
    try {
        return Patch(cs, params);
    } catch (const std::invalid_argument& e) {
        throw InputError(e.what());
    }
}

Json to_json(const Patch& p) {
    Json coords = Json::array();
    for (const auto& c : p.coords()) {
        Json cj{{"name", c.name}, {"lo", c.lo}, {"hi", c.hi}};
        if (c.period) cj["period"] = *c.period;
        coords.push_back(cj);
    }
    return Json{{"coords", coords}, {"params", p.params()}};
}

SmoothForm form_from_json(const Json& j, const Patch& patch, int degree) {
    SmoothForm w(patch, degree);
    if (j.is_null()) return w;
    if (!j.is_object()) throw InputError("form must be an object of index keys");
    for (auto it = j.begin(); it != j.end(); ++it) {
        Index idx = parse_key(it.key());
        if (static_cast<int>(idx.size()) != degree) {
            throw InputError(fmt::format("key '{}' does not have degree {}", it.key(), degree));
        }
        for (int i : idx) {
            if (i < 0 || i >= static_cast<int>(patch.dim())) throw InputError("index out of range in key '" + it.key() + "'");
        }
        w.accumulate(idx, parse_expr(text_of(it.value()), patch));
    }
    return w;
}

Json to_json(const SmoothForm& w) {
    Json out = Json::object();
    for (const auto& [idx, c] : w.coeffs()) out[key_of(idx)] = c.str();
    return out;
}

BForm bform_from_json(const Json& j, Bindings* params) {
    check_schema(j);
    auto [patch, bound] = patch_and_params(j);
    int degree = j.value("degree", 2);
    if (degree < 1) throw InputError("b-form degree must be at least 1");
    Expr f = parse_expr(text_of(field(j, "f")), patch);
    SmoothForm alpha = form_from_json(j.value("alpha", Json()), patch, degree - 1);
    SmoothForm beta = form_from_json(j.value("beta", Json()), patch, degree);
    if (params) *params = bound;
    return BForm(alpha, beta, f);
}

Json to_json(const BForm& w) {
    return Json{{"schema", kSchema}, {"patch", to_json(w.patch())}, {"degree", w.degree()}, {"f", w.f().str()},
                {"alpha", to_json(w.alpha())}, {"beta", to_json(w.beta())}};
}

SurfaceStructure surface_from_json(const Json& j) {
    check_schema(j);
    Topology t = parse_topology(field(j, "topology").get<std::string>());
    std::string V = j.contains("V") ? text_of(j.at("V")) : "1";
    int orientation = j.value("orientation", 1);
    return SurfaceStructure::make(t, text_of(field(j, "P")), V, orientation);
}

Json to_json(const SurfaceStructure& s) {
    return Json{{"schema", kSchema}, {"topology", topology_name(s.topology)}, {"P", s.P.str()}, {"V", s.V.str()},
                {"orientation", s.orientation}};
}

HypersurfaceData zdata_from_json(const Json& j) {
    check_schema(j);
    auto [patch, params] = patch_and_params(j);
    return HypersurfaceData{patch, form_from_json(field(j, "alpha"), patch, 1), form_from_json(field(j, "omega"), patch, 2),
                            params};
}

Json to_json(const TransversalityReport& r) {
    Json comps = Json::array();
    for (const auto& c : r.components) comps.push_back(Json{{"cells", c.cells}, {"sample", c.sample}});
    return Json{{"regular", r.regular},
                {"nonempty", r.nonempty},
                {"degenerate_zero", r.degenerate_zero},
                {"grid_too_coarse", r.grid_too_coarse},
                {"zero_points", r.zero_points},
                {"min_grad", r.min_grad},
                {"components", comps},
                {"messages", r.messages},
                {"grid", r.grid_per_axis},
                {"tolerances", {{"delta_reg", r.delta_reg}}}};
}

Json to_json(const NondegeneracyReport& r) {
    return Json{{"nondegenerate", r.nondegenerate},
                {"symbolic_verdict", r.symbolic_verdict},
                {"top_coefficient", r.top_coefficient},
                {"min_abs", r.min_abs},
                {"argmin", r.argmin},
                {"samples", r.samples},
                {"failed_evaluations", r.failed_evaluations},
                {"grid", r.grid_per_axis},
                {"tolerances", {{"threshold", r.threshold}}}};
}

Json to_json(const RadkoInvariants& r, const SurfaceOptions& opts) {
    Json curves = Json::array();
    for (const auto& c : r.curves) curves.push_back(Json{{"points", c.points.size()}, {"closed", c.closed}, {"length", c.length}});
    return Json{{"schema", kSchema},
                {"n", r.n},
                {"periods", r.periods},
                {"volume", r.volume},
                {"log_coefficient", r.volume_report.log_coefficient},
                {"limit_exists", r.volume_report.limit_exists},
                {"chart_sign", r.volume_report.chart_sign},
                {"curves", curves},
                {"grid", opts.grid},
                {"tolerances",
                 {{"tau_curve", opts.tau_curve},
                  {"delta_reg", opts.delta_reg},
                  {"delta_pole", opts.delta_pole},
                  {"eps0", opts.eps0},
                  {"eps_halvings", opts.eps_halvings},
                  {"tau_log", opts.tau_log},
                  {"outer_nodes", opts.outer_nodes},
                  {"period_refinements", opts.period_refinements}}}};
}

Json to_json(const ClassifyVerdict& v, double tol) {
    auto brief = [](const RadkoInvariants& r) { return Json{{"n", r.n}, {"periods", r.periods}, {"volume", r.volume}}; };
    return Json{{"schema", kSchema},
                {"equivalent", v.equivalent},
                {"witness", v.witness},
                {"first", brief(v.first)},
                {"second", brief(v.second)},
                {"tolerances", {{"tol", tol}}}};
}

Json to_json(const DarbouxResult& r) {
    return Json{{"schema", kSchema},
                {"z", r.change.source.coord(r.z_coord).name},
                {"s", r.change.source.coord(r.s_coord).name},
                {"g", r.g.str()},
                {"t", r.t ? Json(r.t->str()) : Json("quadrature")},
                {"symbolic_identity", r.symbolic_identity},
                {"max_residual", r.max_residual},
                {"min_abs_g", r.min_abs_g},
                {"grid", r.grid},
                {"tolerances", {{"residual", 1e-9}}}};
}

Json to_json(const DarbouxReport& r) {
    return Json{{"method", r.method}, {"exact", r.exact}, {"max_residual", r.max_residual}, {"samples", r.samples},
                {"radius", r.radius}};
}

Json to_json(const MoserReport& r, const MoserOptions& opts) {
    Json j{{"schema", kSchema},
           {"max_residual", r.max_residual},
           {"vfield_on_Z_max", r.vfield_on_Z_max},
           {"tangency_on_Z_max", r.tangency_on_Z_max},
           {"collar_halvings", r.collar_halvings},
           {"collar_radius", r.collar_radius},
           {"steps", r.steps},
           {"grid", r.grid},
           {"samples", r.samples},
           {"primitive", r.primitive},
           {"closed_correction", r.closed_correction},
           {"tolerances",
            {{"fd_step", opts.fd_step},
             {"step", opts.step},
             {"nondeg_tol", opts.nondeg_tol},
             {"tangency_tol", opts.tangency_tol},
             {"max_halvings", opts.max_halvings}}}};
    if (r.primitive_form) j["mu"] = to_json(*r.primitive_form);
    return j;
}

Json to_json(const DefiningReport& r) {
    Json checks = Json::array();
    for (const auto& c : r.checks) {
        Json cj{{"name", c.name}, {"ok", c.ok}, {"detail", c.detail}};
        if (!c.witness.empty()) cj["witness"] = c.witness;
        checks.push_back(cj);
    }
    return Json{{"all_pass", r.all_pass}, {"checks", checks}, {"grid", r.grid_per_axis}, {"tolerances", {{"threshold", r.threshold}}}};
}

Json to_json(const ExtensionModel& m) {
    return Json{{"kind", m.kind == ExtensionKind::Collar ? "collar" : "sine"},
                {"normal", m.normal},
                {"eps", m.eps},
                {"form", to_json(m.form)},
                {"provenance", m.provenance}};
}

Json to_json(const WitnessReport& r) {
    Json checks = Json::array();
    for (const auto& c : r.checks) checks.push_back(Json{{"name", c.name}, {"ok", c.ok}, {"detail", c.detail}});
    return Json{{"consistent", r.consistent}, {"checks", checks}};
}

}  // namespace bgeo
