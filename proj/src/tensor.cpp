#include "mkid/tensor.hpp"

namespace mkid {

std::string Shape4::str() const {
    return "(" + std::to_string(t) + "," + std::to_string(k) + "," +
           std::to_string(c) + "," + std::to_string(m) + ")";
}

Tensor4::Tensor4(Shape4 shape, std::vector<double> data)
    : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.numel())
        throw ShapeError("Tensor4: data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_.str());
}

bool Tensor4::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor4::require_finite(const std::string& what) const {
    if (!all_finite())
        throw std::runtime_error(what + ": non-finite values in tensor " + shape_.str());
}

}  // namespace mkid
