#pragma once

#include <nlohmann/json.hpp>

#include "dflearn/types.hpp"

namespace dflearn::io {

// Matrices travel as {"rows", "cols", "data"} with data the column-major
// [re, im, re, im, ...] flattening.
nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

// Flat column-major [re, im, ...] array for a matrix of known shape.
nlohmann::json matrix_to_flat_json(const Matrix& m);
Matrix matrix_from_flat_json(const nlohmann::json& j, int rows, int cols);

nlohmann::json real_vector_to_json(const RealVector& v);
RealVector real_vector_from_json(const nlohmann::json& j);

}  // namespace dflearn::io
