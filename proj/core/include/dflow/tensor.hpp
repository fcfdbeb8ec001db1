#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dflow/errors.hpp"

namespace dflow {

// Dense row-major array of doubles.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<double> d);

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double value);
    static Tensor scalar(double value);

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t axis) const { return shape.at(axis); }
    std::size_t last_dim() const;

    double& at(std::size_t flat) { return data[flat]; }
    double at(std::size_t flat) const { return data[flat]; }

    // Contiguous slice of the trailing axis: row r of the tensor viewed as
    // [size()/last_dim, last_dim].
    std::span<double> row(std::size_t r);
    std::span<const double> row(std::size_t r) const;

    std::string shape_str() const;
};

std::size_t shape_product(std::span<const std::size_t> shape);
bool same_shape(const Tensor& a, const Tensor& b);
void check_same_shape(const Tensor& a, const Tensor& b, const char* what);

// Batch of symbol sequences as a hard one-hot tensor [B, D, K].
Tensor one_hot_encode(const std::vector<std::vector<int>>& seqs, std::size_t D, int K);

// Argmax along the last axis (ties break to the lowest index).
std::vector<int> argmax_last(const Tensor& t);

} // namespace dflow
