#include "amt/matrix.hpp"

#include "amt/error.hpp"

namespace amt {

std::string Matrix::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* context) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(context) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
}

}  // namespace amt
