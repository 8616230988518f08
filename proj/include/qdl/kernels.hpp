#pragma once

// Dense matrix kernels behind the differentiation engine.
//
// Three product forms cover forward and backward passes of every op:
//   gemm_nn: C[M,N] (+)= A[M,K]   * B[K,N]
//   gemm_nt: C[M,N] (+)= A[M,K]   * B[N,K]^T
//   gemm_tn: C[M,N] (+)= A[K,M]^T * B[K,N]
//
// qdl::kernels::serial holds the naive triple-loop reference used by the
// tests and the benchmark. qdl::kernels::omp runs blocked products over
// fixed row blocks spread across OpenMP threads; results agree with the
// reference to rounding and do not depend on the thread count. The
// unqualified functions dispatch to omp and stay on one thread inside an
// enclosing parallel region or when the product is too small to amortise
// a fork.

#include <cstddef>
#include <span>

namespace qdl::kernels {

struct GemmDims {
	std::size_t m = 0;
	std::size_t n = 0;
	std::size_t k = 0;
};

namespace serial {
void gemm_nn(GemmDims d, std::span<const double> a, std::span<const double> b, std::span<double> c, bool accumulate);
void gemm_nt(GemmDims d, std::span<const double> a, std::span<const double> b, std::span<double> c, bool accumulate);
void gemm_tn(GemmDims d, std::span<const double> a, std::span<const double> b, std::span<double> c, bool accumulate);
} // namespace serial

namespace omp {
void gemm_nn(GemmDims d, std::span<const double> a, std::span<const double> b, std::span<double> c, bool accumulate);
void gemm_nt(GemmDims d, std::span<const double> a, std::span<const double> b, std::span<double> c, bool accumulate);
void gemm_tn(GemmDims d, std::span<const double> a, std::span<const double> b, std::span<double> c, bool accumulate);
} // namespace omp

void gemm_nn(GemmDims d, std::span<const double> a, std::span<const double> b, std::span<double> c,
             bool accumulate = false);
void gemm_nt(GemmDims d, std::span<const double> a, std::span<const double> b, std::span<double> c,
             bool accumulate = false);
void gemm_tn(GemmDims d, std::span<const double> a, std::span<const double> b, std::span<double> c,
             bool accumulate = false);

// Number of threads the omp kernels will use from the current context.
int available_threads();

} // namespace qdl::kernels
