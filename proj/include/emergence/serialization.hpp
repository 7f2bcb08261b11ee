#pragma once

#include <json.hpp>

#include "emergence/operator_core.hpp"

namespace emergence {

using Json = nlohmann::ordered_json;

// Row-major {"rows", "cols", "re", "im"}; "im" may be omitted for real data.
Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);
Json vector_to_json(const Vector& v);
Vector vector_from_json(const Json& j);

Json grid_to_json(const GridGeometry& g);
GridGeometry grid_from_json(const Json& j);

Json operator_spec_to_json(const OperatorSpec& spec);
OperatorSpec operator_spec_from_json(const Json& j);

std::string_view operator_kind_name(OperatorKind kind);

}  // namespace emergence
