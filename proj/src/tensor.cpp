#include "vdpcr/tensor.hpp"

#include <cmath>

#include "vdpcr/common.hpp"

namespace vdpcr {

Tensor::Tensor(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)) {
    std::size_t n = 1;
    for (std::size_t d : shape_) n *= d;
    data_.assign(n, fill);
}

Tensor Tensor::scalar(double v) {
    Tensor t({1});
    t.data_[0] = v;
    return t;
}

Tensor Tensor::from_vector(std::vector<double> v) {
    Tensor t;
    t.shape_ = {v.size()};
    t.data_ = std::move(v);
    return t;
}

Tensor Tensor::from_matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
    require(v.size() == rows * cols, "from_matrix: ", rows, "x", cols, " needs ", rows * cols,
            " values, got ", v.size());
    Tensor t;
    t.shape_ = {rows, cols};
    t.data_ = std::move(v);
    return t;
}

std::size_t Tensor::rows() const {
    if (shape_.size() == 2) return shape_[0];
    if (shape_.size() == 1) return 1;
    fail("rows(): tensor of rank ", shape_.size(), " is not 2-D");
}

std::size_t Tensor::cols() const {
    if (shape_.size() == 2) return shape_[1];
    if (shape_.size() == 1) return shape_[0];
    fail("cols(): tensor of rank ", shape_.size(), " is not 2-D");
}

double Tensor::item() const {
    require(data_.size() == 1, "item(): tensor has ", data_.size(), " elements");
    return data_[0];
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::fill(double v) {
    for (double& x : data_) x = v;
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

std::string shape_to_string(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

}  // namespace vdpcr
