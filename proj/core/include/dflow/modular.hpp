#pragma once

// Integer arithmetic modulo K and its bilinear realization on length-K
// probability vectors. Hard one-hot inputs reproduce the integer ops
// exactly; simplex-relaxed inputs are accepted so gradients can pass
// through the same forms on the backward path.

#include <cstdint>
#include <span>
#include <vector>

#include "dflow/errors.hpp"

namespace dflow {

// Number of classes. K >= 2, immutable.
class Modulus {
public:
    explicit Modulus(int k) : k_(k) {
        if (k < 2) throw Error("Modulus: K must be >= 2, got " + std::to_string(k));
        if (k > 4096) throw Error("Modulus: K capped at 4096, got " + std::to_string(k));
    }
    int value() const { return k_; }

private:
    int k_;
};

// allowed[s] is true iff s is an invertible scale: s != 0 and gcd(s, K) = 1.
struct SigmaMask {
    std::vector<bool> allowed;

    int size() const { return static_cast<int>(allowed.size()); }
};

// Multiplicative inverse of s modulo K via the extended Euclidean algorithm.
// Throws NonInvertibleScale when gcd(s, K) != 1 (including s = 0).
int mod_inverse(int s, Modulus K);

SigmaMask coprime_mask(Modulus K);

// Mass tolerance for scale operands on masked (non-invertible) indices.
inline constexpr double kSigmaMassTolerance = 1e-9;

// c[k] = sum_i a[i] * b[(k - i) mod K]; hard (e_i, e_j) -> e_{(i+j) mod K}.
void one_hot_add(std::span<const double> a, std::span<const double> b,
                 std::span<double> out, Modulus K);

// c[k] = sum_j b[j] * a[(k + j) mod K]; hard (e_i, e_j) -> e_{(i-j) mod K}.
void one_hot_sub(std::span<const double> a, std::span<const double> b,
                 std::span<double> out, Modulus K);

// c[k] = sum_{j,i : j*i = k mod K} s[j] * a[i]; hard (e_j, e_i) -> e_{(j*i) mod K}.
// s must carry no more than kSigmaMassTolerance mass on indices the mask
// disallows; mask defaults to coprime_mask(K) when null.
void one_hot_mul(std::span<const double> s, std::span<const double> a,
                 std::span<double> out, Modulus K, const SigmaMask* mask = nullptr);

// c[k] = sum_j s[j] * a[(j*k) mod K]; hard (e_j, e_m) -> e_{(j^-1 * m) mod K}.
void one_hot_div(std::span<const double> s, std::span<const double> a,
                 std::span<double> out, Modulus K, const SigmaMask* mask = nullptr);

// Convenience allocating overloads.
std::vector<double> one_hot_add(std::span<const double> a, std::span<const double> b, Modulus K);
std::vector<double> one_hot_sub(std::span<const double> a, std::span<const double> b, Modulus K);
std::vector<double> one_hot_mul(std::span<const double> s, std::span<const double> a, Modulus K);
std::vector<double> one_hot_div(std::span<const double> s, std::span<const double> a, Modulus K);

// Hard one-hot basis vector e_i of length K.
std::vector<double> hard_one_hot(int i, Modulus K);

// Index of the single unit entry; -1 if the vector is not hard one-hot.
int hard_index(std::span<const double> v, double tol = 1e-9);

} // namespace dflow
