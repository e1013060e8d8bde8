#pragma once

#include <Eigen/Core>

namespace darf::nn::blas {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapC = Eigen::Map<const RowMat<T>>;
template <class T>
using Map = Eigen::Map<RowMat<T>>;

// All matrices row-major. Eigen is built single-threaded here; results for a
// given shape are bitwise reproducible.

// c(m,n) (+)= a(m,k) * b(k,n)
template <class T>
void gemm(const T* a, const T* b, T* c, long m, long k, long n, bool accumulate = false) {
    Map<T> C(c, m, n);
    if (accumulate)
        C.noalias() += MapC<T>(a, m, k) * MapC<T>(b, k, n);
    else
        C.noalias() = MapC<T>(a, m, k) * MapC<T>(b, k, n);
}

// c(k,n) += a(m,k)^T * g(m,n)
template <class T>
void gemm_tn_acc(const T* a, const T* g, T* c, long m, long k, long n) {
    Map<T>(c, k, n).noalias() += MapC<T>(a, m, k).transpose() * MapC<T>(g, m, n);
}

// c(m,k) (+)= g(m,n) * b(k,n)^T
template <class T>
void gemm_nt(const T* g, const T* b, T* c, long m, long n, long k, bool accumulate = false) {
    Map<T> C(c, m, k);
    if (accumulate)
        C.noalias() += MapC<T>(g, m, n) * MapC<T>(b, k, n).transpose();
    else
        C.noalias() = MapC<T>(g, m, n) * MapC<T>(b, k, n).transpose();
}

}  // namespace darf::nn::blas
