// bgeo: command-line front end. Exit codes: 0 success, 1 verification
// failure, 2 usage or input error.
#include "bgeo/io.hpp"

#include <CLI11.hpp>
#include <boost/algorithm/string/replace.hpp>
#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace bgeo;

namespace {

constexpr int kOk = 0;
constexpr int kFail = 1;
constexpr int kUsage = 2;

struct RunConfig {
    std::uint64_t seed = 20240601;
    int grid = 0;  // 0: per-command default
    std::string out_dir = ".";
    bool emit_plot = false;
    std::string format = "json";

    double tol_curve = 1e-12;
    double tol_reg = 1e-6;
    double tol_pole = 1e-3;
    double tol_log = 1e-4;
    double tol_nondeg = 1e-6;
    double tol_darboux = 1e-9;
    double tol_moser = 1e-5;
    double tol_z = 1e-8;
};

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

template <class F>
auto load(const std::string& what, F&& f) {
    try {
        return f();
    } catch (const std::exception& e) {
        throw UsageError(what + ": " + e.what());
    }
}

void emit(Json j, const RunConfig& cfg) {
    if (j.is_object()) j["seed"] = cfg.seed;
    if (cfg.format != "json" && j.is_object()) {
        const char* sep = cfg.format == "csv" ? "," : ": ";
        if (cfg.format == "csv") std::cout << "key,value\n";
        for (const auto& [k, v] : j.items()) {
            std::string text = v.is_string() ? v.get<std::string>() : v.dump();
            if (cfg.format == "csv") text = "\"" + boost::replace_all_copy(text, "\"", "\"\"") + "\"";
            std::cout << k << sep << text << "\n";
        }
        return;
    }
    std::cout << j.dump(2) << "\n";
}

std::filesystem::path out_path(const RunConfig& cfg, const std::string& name) {
    std::filesystem::create_directories(cfg.out_dir);
    return std::filesystem::path(cfg.out_dir) / name;
}

std::string csv_number(double v) { return fmt::format("{:.17g}", v); }

SurfaceOptions surface_options(const RunConfig& cfg) {
    SurfaceOptions o;
    if (cfg.grid) o.grid = cfg.grid;
    o.tau_curve = cfg.tol_curve;
    o.delta_reg = cfg.tol_reg;
    o.delta_pole = cfg.tol_pole;
    o.tau_log = cfg.tol_log;
    return o;
}

std::vector<double> parse_point(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw UsageError("bad point '" + text + "'");
        }
    }
    return out;
}

// ---------------------------------------------------------------- commands

int cmd_parse(const RunConfig& cfg, const std::string& file, const std::string& expr, const std::string& coords) {
    if (!expr.empty()) {
        std::vector<Coordinate> cs;
        std::stringstream ss(coords);
        std::string name;
        while (std::getline(ss, name, ',')) cs.push_back(Coordinate{name});
        Expr e = load("expression", [&] { return normalize(parse_expr(expr, Patch(cs))); });
        emit(Json{{"schema", kSchema}, {"expr", e.str()}}, cfg);
        return kOk;
    }
    if (file.empty()) throw UsageError("parse needs a file or --expr");
    Json j = load(file, [&] { return read_json_file(file); });
    if (j.contains("topology")) {
        emit(to_json(load(file, [&] { return surface_from_json(j); })), cfg);
    } else if (j.contains("omega")) {
        auto z = load(file, [&] { return zdata_from_json(j); });
        Json out{{"schema", kSchema}, {"patch", to_json(z.patch)}, {"alpha", to_json(z.alpha)}, {"omega", to_json(z.omega)}};
        out["params"] = Json::object();
        for (const auto& [k, v] : z.params) out["params"][k] = v;
        emit(out, cfg);
    } else {
        emit(to_json(load(file, [&] { return bform_from_json(j); })), cfg);
    }
    return kOk;
}

int cmd_check(const RunConfig& cfg, const std::string& file) {
    Json j = load(file, [&] { return read_json_file(file); });
    if (j.contains("topology")) {
        auto s = load(file, [&] { return surface_from_json(j); });
        auto tr = transversality_check(s.P, s.patch, GridSpec{cfg.grid ? cfg.grid : 64}, cfg.tol_reg);
        emit(Json{{"schema", kSchema}, {"transversality", to_json(tr)}}, cfg);
        return tr.regular ? kOk : kFail;
    }
    Bindings params;
    BForm w = load(file, [&] { return bform_from_json(j, &params); });
    GridSpec grid{cfg.grid ? cfg.grid : 32, 65536};
    auto tr = transversality_check(w.f(), w.patch(), grid, cfg.tol_reg, params);
    Json out{{"schema", kSchema}, {"transversality", to_json(tr)}};
    bool ok = tr.regular || !tr.nonempty;
    if (w.degree() == 2 && w.patch().dim() % 2 == 0) {
        auto nd = nondegeneracy_check(w, grid, params, cfg.tol_nondeg);
        out["nondegeneracy"] = to_json(nd);
        ok = ok && nd.nondegenerate;
    }
    auto sm = is_smooth(w, params);
    out["smooth"] = sm.status == SmoothStatus::Smooth ? "smooth" : sm.status == SmoothStatus::NotSmooth ? "not smooth" : "inconclusive";
    out["ok"] = ok;
    emit(out, cfg);
    return ok ? kOk : kFail;
}

int cmd_invariants(const RunConfig& cfg, const std::string& file) {
    Json j = load(file, [&] { return read_json_file(file); });
    auto s = load(file, [&] { return surface_from_json(j); });
    SurfaceOptions opts = surface_options(cfg);
    RadkoInvariants inv;
    try {
        inv = radko_invariants(s, opts);
    } catch (const SurfaceError& e) {
        emit(Json{{"schema", kSchema}, {"error", e.what()}}, cfg);
        return kFail;
    }
    emit(to_json(inv, opts), cfg);
    if (cfg.emit_plot) {
        std::ofstream v(out_path(cfg, "volume_curve.csv"));
        v << "eps,value\n";
        for (std::size_t i = 0; i < inv.volume_report.eps.size(); ++i) {
            v << csv_number(inv.volume_report.eps[i]) << "," << csv_number(inv.volume_report.values[i]) << "\n";
        }
        std::ofstream c(out_path(cfg, "zero_curves.csv"));
        c << "curve,index," << s.patch.coord(0).name << "," << s.patch.coord(1).name << "\n";
        for (std::size_t k = 0; k < inv.curves.size(); ++k) {
            const auto& pts = inv.curves[k].points;
            for (std::size_t i = 0; i < pts.size(); ++i) {
                c << k << "," << i << "," << csv_number(pts[i][0]) << "," << csv_number(pts[i][1]) << "\n";
            }
        }
    }
    return kOk;
}

int cmd_classify(const RunConfig& cfg, const std::string& a, const std::string& b, double tol, bool json) {
    auto sa = load(a, [&] { return surface_from_json(read_json_file(a)); });
    auto sb = load(b, [&] { return surface_from_json(read_json_file(b)); });
    ClassifyVerdict v;
    try {
        v = classify_pair(sa, sb, tol, surface_options(cfg));
    } catch (const SurfaceError& e) {
        std::cout << "not comparable: " << e.what() << "\n";
        return kFail;
    }
    if (json) {
        emit(to_json(v, tol), cfg);
    } else if (v.equivalent) {
        std::cout << "equivalent\n";
    } else {
        std::cout << "not equivalent: " << v.witness << "\n";
    }
    return v.equivalent ? kOk : kFail;
}

int cmd_cohomology(const RunConfig& cfg, const std::string& betti_m, const std::vector<std::string>& betti_z,
                   const std::string& surface) {
    BettiData data;
    if (!surface.empty()) {
        auto gn = load("--surface", [&] { return parse_betti(surface); });
        if (gn.size() != 2 || gn[0] < 0 || gn[1] < 1) throw UsageError("--surface expects g,n with g >= 0 and n >= 1");
        data = BettiData{2, surface_betti(gn[0]), std::vector<std::vector<int>>(static_cast<std::size_t>(gn[1]), {1, 1})};
    } else {
        if (betti_m.empty()) throw UsageError("cohomology needs --betti-m or --surface");
        data.betti_M = load("--betti-m", [&] { return parse_betti(betti_m); });
        data.dim = static_cast<int>(data.betti_M.size()) - 1;
        for (const auto& z : betti_z) data.components.push_back(load("--betti-z", [&] { return parse_betti(z); }));
    }
    load("Betti data", [&] {
        data.validate();
        return 0;
    });
    auto wit = nonvanishing_witness(data);
    Json out{{"schema", kSchema},
             {"dim", data.dim},
             {"b_betti", b_betti(data)},
             {"poisson_betti", poisson_betti(data)},
             {"consistent", wit.consistent},
             {"witness", to_json(wit)},
             {"warnings", data.warnings()}};
    if (!surface.empty()) {
        auto gn = parse_betti(surface);
        auto ref = surface_poisson_cohomology(gn[0], gn[1]);
        out["surface_formula"] = std::vector<int>{ref[0], ref[1], ref[2]};
    }
    emit(out, cfg);
    return wit.consistent ? kOk : kFail;
}

int cmd_darboux(const RunConfig& cfg, const std::string& file, const std::string& point) {
    Bindings params;
    BForm w = load(file, [&] { return bform_from_json(read_json_file(file), &params); });
    Json out{{"schema", kSchema}};
    bool ok = true;
    if (w.patch().dim() == 2) {
        DarbouxOptions o;
        if (cfg.grid) o.grid = cfg.grid;
        auto r = darboux2d(w, o, params);
        out = to_json(r);
        out["tolerances"]["residual"] = cfg.tol_darboux;
        ok = r.max_residual < cfg.tol_darboux;
    }
    if (!point.empty()) {
        auto rep = darboux_verify(w, parse_point(point), 200, params);
        out["verify"] = to_json(rep);
        ok = ok && rep.max_residual < cfg.tol_darboux;
    } else if (w.patch().dim() != 2) {
        throw UsageError("darboux in dimension > 2 needs --point");
    }
    out["ok"] = ok;
    emit(out, cfg);
    return ok ? kOk : kFail;
}

void write_residual_csv(const RunConfig& cfg, const MoserReport& r, const Patch& p) {
    std::ofstream c(out_path(cfg, "residual_grid.csv"));
    for (const auto& co : p.coords()) c << co.name << ",";
    c << "residual\n";
    for (const auto& s : r.residual_grid) {
        for (double v : s.x) c << csv_number(v) << ",";
        c << csv_number(s.residual) << "\n";
    }
}

int cmd_moser(const RunConfig& cfg, const std::vector<std::string>& files, const std::string& family_file,
              const std::string& mu_file, const std::string& tname, int steps, bool order) {
    MoserOptions o;
    if (cfg.grid) o.grid = cfg.grid;
    o.step = 1.0 / steps;
    MoserReport r;
    Patch patch;
    bool global = !family_file.empty();
    Json extra = Json::object();
    if (global) {
        if (mu_file.empty()) throw UsageError("--family needs --mu");
        Bindings params;
        BForm fam = load(family_file, [&] { return bform_from_json(read_json_file(family_file), &params); });
        BForm mu = load(mu_file, [&] { return bform_from_json(read_json_file(mu_file)); });
        patch = fam.patch();
        r = moser_global_verify(fam, mu, tname, o, params);
    } else {
        if (files.size() != 2) throw UsageError("moser needs two b-form files, or --family and --mu");
        Bindings params;
        BForm w0 = load(files[0], [&] { return bform_from_json(read_json_file(files[0]), &params); });
        BForm w1 = load(files[1], [&] { return bform_from_json(read_json_file(files[1])); });
        patch = w0.patch();
        r = moser_relative_verify(w0, w1, o, params);
        if (order) {
            MoserOptions base = o;
            base.grid = 16;
            base.step = 1.0 / 8;
            auto c = moser_convergence(w0, w1, base, params);
            extra = Json{{"coarse", c.coarse.max_residual}, {"fine", c.fine.max_residual}, {"order", c.order},
                         {"coarse_grid", c.coarse.grid}, {"fine_grid", c.fine.grid}, {"coarse_steps", c.coarse.steps},
                         {"fine_steps", c.fine.steps}};
        }
    }
    Json out = to_json(r, o);
    out["mode"] = global ? "global" : "relative";
    out["tolerances"]["max_residual"] = cfg.tol_moser;
    out["tolerances"]["on_Z"] = cfg.tol_z;
    if (!extra.empty()) out["convergence"] = extra;
    bool ok = r.max_residual < cfg.tol_moser && (global ? r.tangency_on_Z_max : r.vfield_on_Z_max) < cfg.tol_z;
    if (order && extra.contains("order")) ok = ok && extra["order"].get<double>() >= 3.0;
    out["ok"] = ok;
    if (cfg.emit_plot) {
        write_residual_csv(cfg, r, patch);
        out["residual_grid_csv"] = out_path(cfg, "residual_grid.csv").string();
    }
    emit(out, cfg);
    return ok ? kOk : kFail;
}

int cmd_extend(const RunConfig& cfg, const std::string& file, double eps, const std::string& sine) {
    auto data = load(file, [&] { return zdata_from_json(read_json_file(file)); });
    GridSpec grid{cfg.grid ? cfg.grid : 32, 32768};
    auto rep = check_defining_forms(data, grid);
    Json out{{"schema", kSchema}, {"checks", to_json(rep)}};
    if (!rep.all_pass) {
        out["ok"] = false;
        emit(out, cfg);
        return kFail;
    }
    try {
        ExtensionModel m = sine.empty() ? build_extension(data, eps) : build_sine_extension(data, sine);
        out["model"] = to_json(m);
        auto tr = transversality_check(m.form.f(), m.patch, GridSpec{16, 65536}, cfg.tol_reg, data.params);
        out["transversality"] = to_json(tr);
        out["ok"] = tr.regular;
    } catch (const ExtensionError& e) {
        out["error"] = e.what();
        out["ok"] = false;
    }
    emit(out, cfg);
    return out["ok"].get<bool>() ? kOk : kFail;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bgeo: b-symplectic and b-Poisson geometry toolkit"};
    app.require_subcommand(1);
    RunConfig cfg;
    app.add_option("--seed", cfg.seed, "seed for randomized identity tests");
    app.add_option("--grid", cfg.grid, "grid points per axis")->check(CLI::Range(8, 4096));
    app.add_option("--out", cfg.out_dir, "directory for CSV output");
    app.add_flag("--emit-plot", cfg.emit_plot, "write CSV series for plotting");
    app.add_option("--format", cfg.format, "json, csv or text")->check(CLI::IsMember({"json", "csv", "text"}));
    auto pos = CLI::PositiveNumber;
    app.add_option("--tol-curve", cfg.tol_curve, "tolerance for zero-curve root solves")->check(pos);
    app.add_option("--tol-reg", cfg.tol_reg, "minimum |grad f| on Z")->check(pos);
    app.add_option("--tol-pole", cfg.tol_pole, "pole detection threshold")->check(pos);
    app.add_option("--tol-log", cfg.tol_log, "bound on the fitted log coefficient")->check(pos);
    app.add_option("--tol-nondeg", cfg.tol_nondeg, "nondegeneracy threshold")->check(pos);
    app.add_option("--tol-darboux", cfg.tol_darboux, "Darboux residual tolerance")->check(pos);
    app.add_option("--tol-moser", cfg.tol_moser, "Moser residual tolerance")->check(pos);
    app.add_option("--tol-z", cfg.tol_z, "bound on the Moser field on Z")->check(pos);

    std::string file, expr, coords = "x,y";
    auto* parse = app.add_subcommand("parse", "normalize a JSON document or an expression");
    parse->add_option("file", file);
    parse->add_option("--expr", expr);
    parse->add_option("--coords", coords);

    std::string check_file;
    auto* check = app.add_subcommand("check", "transversality and nondegeneracy");
    check->add_option("file", check_file)->required();

    std::string inv_file;
    auto* inv = app.add_subcommand("invariants", "Radko invariants of a surface structure");
    inv->add_option("file", inv_file)->required();

    std::string ca, cb;
    double tol = 1e-4;
    bool classify_json = false;
    auto* classify = app.add_subcommand("classify", "compare two surface structures");
    classify->add_option("first", ca)->required();
    classify->add_option("second", cb)->required();
    classify->add_option("--tol", tol)->check(pos);
    classify->add_flag("--json", classify_json);

    std::string betti_m, surface;
    std::vector<std::string> betti_z;
    auto* coh = app.add_subcommand("cohomology", "b-cohomology and Poisson cohomology dimensions");
    coh->add_option("--betti-m", betti_m);
    coh->add_option("--betti-z", betti_z, "Betti numbers of one Z component (repeatable)");
    coh->add_option("--surface", surface, "g,n");

    std::string dfile, point;
    auto* darb = app.add_subcommand("darboux", "Darboux coordinates and normal-form residuals");
    darb->add_option("file", dfile)->required();
    darb->add_option("--point", point, "point on Z, comma-separated");

    std::vector<std::string> mfiles;
    std::string family, mu, tname = "t";
    int steps = 256;
    bool order = false;
    auto* moser = app.add_subcommand("moser", "Moser path verification");
    moser->add_option("files", mfiles);
    moser->add_option("--family", family);
    moser->add_option("--mu", mu);
    moser->add_option("--t", tname);
    moser->add_option("--steps", steps, "RK4 steps on [0, 1]")->check(CLI::Range(1, 1 << 20));
    moser->add_flag("--order", order, "also measure the convergence order");

    std::string zfile, sine;
    double eps = 1.0;
    auto* ext = app.add_subcommand("extend", "b-symplectic extension of hypersurface data");
    ext->add_option("file", zfile)->required();
    ext->add_option("--eps", eps)->check(pos);
    ext->add_option("--sine", sine, "name of a circle coordinate for the sin-defining-function model");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }
    set_default_equiv_seed(cfg.seed);

    try {
        if (*parse) return cmd_parse(cfg, file, expr, coords);
        if (*check) return cmd_check(cfg, check_file);
        if (*inv) return cmd_invariants(cfg, inv_file);
        if (*classify) return cmd_classify(cfg, ca, cb, tol, classify_json);
        if (*coh) return cmd_cohomology(cfg, betti_m, betti_z, surface);
        if (*darb) return cmd_darboux(cfg, dfile, point);
        if (*moser) return cmd_moser(cfg, mfiles, family, mu, tname, steps, order);
        if (*ext) return cmd_extend(cfg, zfile, eps, sine);
    } catch (const UsageError& e) {
        std::cerr << "bgeo: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "bgeo: " << e.what() << "\n";
        return kFail;
    }
    return kUsage;
}
