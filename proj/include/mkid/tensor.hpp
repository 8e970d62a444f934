#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace mkid {

// Shape convention throughout: (frames T, plants K, channels C, time M),
// row-major with the time axis fastest.
struct Shape4 {
    std::size_t t = 0, k = 0, c = 0, m = 0;

    std::size_t numel() const { return t * k * c * m; }
    bool operator==(const Shape4&) const = default;
    std::string str() const;
};

class Tensor4 {
public:
    Tensor4() = default;
    explicit Tensor4(Shape4 shape, double fill = 0.0)
        : shape_(shape), data_(shape.numel(), fill) {}
    Tensor4(Shape4 shape, std::vector<double> data);

    const Shape4& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }

    double& at(std::size_t t, std::size_t k, std::size_t c, std::size_t m) {
        return data_[((t * shape_.k + k) * shape_.c + c) * shape_.m + m];
    }
    const double& at(std::size_t t, std::size_t k, std::size_t c, std::size_t m) const {
        return data_[((t * shape_.k + k) * shape_.c + c) * shape_.m + m];
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

    bool all_finite() const;
    void require_finite(const std::string& what) const;

private:
    Shape4 shape_;
    std::vector<double> data_;
};

// Complex counterpart stored as separate real and imaginary planes.
class CTensor {
public:
    CTensor() = default;
    explicit CTensor(Shape4 shape)
        : shape_(shape), re_(shape.numel(), 0.0), im_(shape.numel(), 0.0) {}

    const Shape4& shape() const { return shape_; }
    std::size_t size() const { return re_.size(); }

    std::size_t index(std::size_t t, std::size_t k, std::size_t c, std::size_t m) const {
        return ((t * shape_.k + k) * shape_.c + c) * shape_.m + m;
    }
    double& re(std::size_t t, std::size_t k, std::size_t c, std::size_t m) {
        return re_[index(t, k, c, m)];
    }
    double& im(std::size_t t, std::size_t k, std::size_t c, std::size_t m) {
        return im_[index(t, k, c, m)];
    }
    const double& re(std::size_t t, std::size_t k, std::size_t c, std::size_t m) const {
        return re_[index(t, k, c, m)];
    }
    const double& im(std::size_t t, std::size_t k, std::size_t c, std::size_t m) const {
        return im_[index(t, k, c, m)];
    }

    std::vector<double>& re_raw() { return re_; }
    std::vector<double>& im_raw() { return im_; }
    const std::vector<double>& re_raw() const { return re_; }
    const std::vector<double>& im_raw() const { return im_; }

private:
    Shape4 shape_;
    std::vector<double> re_, im_;
};

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require_shape(const Shape4& got, const Shape4& want, const std::string& ctx) {
    if (!(got == want))
        throw ShapeError(ctx + ": shape " + got.str() + " != expected " + want.str());
}

}  // namespace mkid
