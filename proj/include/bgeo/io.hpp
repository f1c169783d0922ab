// JSON documents (schema "bgeo/1") for patches, forms, surfaces and
// hypersurface data, plus JSON renderings of the reports.
#pragma once

#include "bgeo/cohomology.hpp"
#include "bgeo/extension.hpp"
#include "bgeo/forms.hpp"
#include "bgeo/normalform.hpp"
#include "bgeo/surface2d.hpp"

#include <json.hpp>

#include <string>

namespace bgeo {

using Json = nlohmann::json;

inline constexpr const char* kSchema = "bgeo/1";

class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

Json read_json_file(const std::string& path);
/// Accepts a missing "schema" field; any other value than bgeo/1 is an error.
void check_schema(const Json& j);

Patch patch_from_json(const Json& j);
Json to_json(const Patch& p);

/// Keys are comma-joined indices ("0,1"), optionally parenthesized; the
/// empty key is the degree-0 component.
SmoothForm form_from_json(const Json& j, const Patch& patch, int degree);
Json to_json(const SmoothForm& w);

/// {"patch", "f", "alpha", "beta", "degree" (default 2)}.
BForm bform_from_json(const Json& j, Bindings* params = nullptr);
Json to_json(const BForm& w);

/// {"topology", "P", "V", "orientation"}.
SurfaceStructure surface_from_json(const Json& j);
Json to_json(const SurfaceStructure& s);

/// {"patch", "alpha", "omega", "params"}.
HypersurfaceData zdata_from_json(const Json& j);

Json to_json(const TransversalityReport& r);
Json to_json(const NondegeneracyReport& r);
Json to_json(const RadkoInvariants& r, const SurfaceOptions& opts);
Json to_json(const ClassifyVerdict& v, double tol);
Json to_json(const DarbouxResult& r);
Json to_json(const DarbouxReport& r);
Json to_json(const MoserReport& r, const MoserOptions& opts);
Json to_json(const DefiningReport& r);
Json to_json(const ExtensionModel& m);
Json to_json(const WitnessReport& r);

}  // namespace bgeo
