#pragma once

#include <Eigen/Core>

// Thin row-major GEMM wrappers over Eigen. Single-threaded on purpose:
// batch-level parallelism happens above this layer and must stay
// deterministic for any ACNN_THREADS value.

namespace acnn::detail {

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// C[M,N] = (or +=) A[M,K] * B[K,N]
template <typename T>
void gemm_nn(bool accumulate, const T* a, const T* b, T* c, int m, int k, int n) {
    ConstMatMap<T> A(a, m, k), B(b, k, n);
    MatMap<T> C(c, m, n);
    if (accumulate)
        C.noalias() += A * B;
    else
        C.noalias() = A * B;
}

// C[M,N] = (or +=) A[M,K] * B[N,K]^T
template <typename T>
void gemm_nt(bool accumulate, const T* a, const T* b, T* c, int m, int k, int n) {
    ConstMatMap<T> A(a, m, k), B(b, n, k);
    MatMap<T> C(c, m, n);
    if (accumulate)
        C.noalias() += A * B.transpose();
    else
        C.noalias() = A * B.transpose();
}

// C[M,N] = (or +=) A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(bool accumulate, const T* a, const T* b, T* c, int m, int k, int n) {
    ConstMatMap<T> A(a, k, m), B(b, k, n);
    MatMap<T> C(c, m, n);
    if (accumulate)
        C.noalias() += A.transpose() * B;
    else
        C.noalias() = A.transpose() * B;
}

}  // namespace acnn::detail
