#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "dalm/errors.hpp"

namespace dalm::nn {

// Dense row-major tensor. Float storage is the production mode; the same
// code instantiates with double for finite-difference test runs.
template <class T>
struct Tensor {
    std::vector<long> shape;
    std::vector<T> v;

    Tensor() = default;
    explicit Tensor(std::vector<long> s) : shape(std::move(s)) {
        v.assign(static_cast<size_t>(count(shape)), T(0));
    }
    Tensor(std::vector<long> s, std::vector<T> values) : shape(std::move(s)), v(std::move(values)) {
        if (static_cast<long>(v.size()) != count(shape))
            throw std::logic_error("tensor: value count does not match shape");
    }

    static long count(const std::vector<long>& s) {
        long n = 1;
        for (long d : s) n *= d;
        return n;
    }

    long numel() const { return static_cast<long>(v.size()); }
    long rows() const { return shape.empty() ? 0 : shape[0]; }
    long cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    T& at(long r, long c) { return v[static_cast<size_t>(r * cols() + c)]; }
    const T& at(long r, long c) const { return v[static_cast<size_t>(r * cols() + c)]; }

    void zero() { std::fill(v.begin(), v.end(), T(0)); }

    bool all_finite() const {
        for (T x : v)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }
};

template <class T>
std::string shape_str(const Tensor<T>& t) {
    std::string s = "[";
    for (size_t i = 0; i < t.shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(t.shape[i]);
    }
    return s + "]";
}

// C[m,n] += A[m,k] * B[k,n]
template <class T>
void matmul_acc(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& c) {
    const long m = a.rows(), k = a.cols(), n = b.cols();
    const T* pa = a.v.data();
    const T* pb = b.v.data();
    T* pc = c.v.data();
    for (long i = 0; i < m; ++i) {
        for (long p = 0; p < k; ++p) {
            const T aip = pa[i * k + p];
            if (aip == T(0)) continue;
            const T* brow = pb + p * n;
            T* crow = pc + i * n;
            for (long j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

// C[m,n] += A[m,k] * B[n,k]^T
template <class T>
void matmul_nt_acc(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& c) {
    const long m = a.rows(), k = a.cols(), n = b.rows();
    for (long i = 0; i < m; ++i) {
        const T* arow = a.v.data() + i * k;
        T* crow = c.v.data() + i * n;
        for (long j = 0; j < n; ++j) {
            const T* brow = b.v.data() + j * k;
            T acc = T(0);
            for (long p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

// C[k,n] += A[m,k]^T * B[m,n]
template <class T>
void matmul_tn_acc(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& c) {
    const long m = a.rows(), k = a.cols(), n = b.cols();
    for (long i = 0; i < m; ++i) {
        const T* arow = a.v.data() + i * k;
        const T* brow = b.v.data() + i * n;
        for (long p = 0; p < k; ++p) {
            const T aip = arow[p];
            if (aip == T(0)) continue;
            T* crow = c.v.data() + p * n;
            for (long j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

}  // namespace dalm::nn
