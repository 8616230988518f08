#include "qdl/kernels.hpp"

#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Dense>

#include <algorithm>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace qdl::kernels {

namespace serial {

void gemm_nn(GemmDims d, std::span<const double> a, std::span<const double> b, std::span<double> c, bool accumulate) {
	for (std::size_t i = 0; i < d.m; ++i) {
		for (std::size_t j = 0; j < d.n; ++j) {
			double sum = accumulate ? c[i * d.n + j] : 0.0;
			for (std::size_t p = 0; p < d.k; ++p) {
				sum += a[i * d.k + p] * b[p * d.n + j];
			}
			c[i * d.n + j] = sum;
		}
	}
}

void gemm_nt(GemmDims d, std::span<const double> a, std::span<const double> b, std::span<double> c, bool accumulate) {
	for (std::size_t i = 0; i < d.m; ++i) {
		for (std::size_t j = 0; j < d.n; ++j) {
			double sum = accumulate ? c[i * d.n + j] : 0.0;
			for (std::size_t p = 0; p < d.k; ++p) {
				sum += a[i * d.k + p] * b[j * d.k + p];
			}
			c[i * d.n + j] = sum;
		}
	}
}

void gemm_tn(GemmDims d, std::span<const double> a, std::span<const double> b, std::span<double> c, bool accumulate) {
	for (std::size_t i = 0; i < d.m; ++i) {
		for (std::size_t j = 0; j < d.n; ++j) {
			double sum = accumulate ? c[i * d.n + j] : 0.0;
			for (std::size_t p = 0; p < d.k; ++p) {
				sum += a[p * d.m + i] * b[p * d.n + j];
			}
			c[i * d.n + j] = sum;
		}
	}
}

} // namespace serial

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

constexpr std::size_t kParallelWork = 1u << 16;
constexpr std::size_t kRowBlock = 16;

// Large products are always cut into the same row blocks, so the rounding
// of every element is independent of how many threads run the blocks.
template <class Block>
void run_rows(GemmDims d, bool allow_parallel, Block &&block) {
	const std::size_t blocks = (d.m + kRowBlock - 1) / kRowBlock;
	if (blocks < 2 || d.m * d.n * d.k < kParallelWork) {
		block(0, d.m);
		return;
	}
	auto one = [&](std::size_t blk) {
		const std::size_t begin = blk * kRowBlock;
		block(begin, std::min(d.m, begin + kRowBlock) - begin);
	};
#ifdef _OPENMP
	if (allow_parallel && !omp_in_parallel() && omp_get_max_threads() > 1) {
#pragma omp parallel for schedule(static)
		for (std::size_t blk = 0; blk < blocks; ++blk) {
			one(blk);
		}
		return;
	}
#else
	(void)allow_parallel;
#endif
	for (std::size_t blk = 0; blk < blocks; ++blk) {
		one(blk);
	}
}

template <class Product>
void store(MutMap &c, std::size_t begin, std::size_t rows, const Product &product, bool accumulate) {
	auto dst = c.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(rows));
	if (accumulate) {
		dst.noalias() += product;
	} else {
		dst.noalias() = product;
	}
}

void nn_impl(GemmDims d, std::span<const double> a, std::span<const double> b, std::span<double> c, bool accumulate,
             bool allow_parallel) {
	const ConstMap am(a.data(), d.m, d.k), bm(b.data(), d.k, d.n);
	MutMap cm(c.data(), d.m, d.n);
	run_rows(d, allow_parallel, [&](std::size_t begin, std::size_t rows) {
		store(cm, begin, rows, am.middleRows(begin, rows) * bm, accumulate);
	});
}

void nt_impl(GemmDims d, std::span<const double> a, std::span<const double> b, std::span<double> c, bool accumulate,
             bool allow_parallel) {
	const ConstMap am(a.data(), d.m, d.k), bm(b.data(), d.n, d.k);
	MutMap cm(c.data(), d.m, d.n);
	run_rows(d, allow_parallel, [&](std::size_t begin, std::size_t rows) {
		store(cm, begin, rows, am.middleRows(begin, rows) * bm.transpose(), accumulate);
	});
}

void tn_impl(GemmDims d, std::span<const double> a, std::span<const double> b, std::span<double> c, bool accumulate,
             bool allow_parallel) {
	const ConstMap am(a.data(), d.k, d.m), bm(b.data(), d.k, d.n);
	MutMap cm(c.data(), d.m, d.n);
	run_rows(d, allow_parallel, [&](std::size_t begin, std::size_t rows) {
		store(cm, begin, rows, am.middleCols(begin, rows).transpose() * bm, accumulate);
	});
}

} // namespace

namespace omp {

void gemm_nn(GemmDims d, std::span<const double> a, std::span<const double> b, std::span<double> c, bool accumulate) {
	nn_impl(d, a, b, c, accumulate, true);
}

void gemm_nt(GemmDims d, std::span<const double> a, std::span<const double> b, std::span<double> c, bool accumulate) {
	nt_impl(d, a, b, c, accumulate, true);
}

void gemm_tn(GemmDims d, std::span<const double> a, std::span<const double> b, std::span<double> c, bool accumulate) {
	tn_impl(d, a, b, c, accumulate, true);
}

} // namespace omp

void gemm_nn(GemmDims d, std::span<const double> a, std::span<const double> b, std::span<double> c, bool accumulate) {
	omp::gemm_nn(d, a, b, c, accumulate);
}

void gemm_nt(GemmDims d, std::span<const double> a, std::span<const double> b, std::span<double> c, bool accumulate) {
	omp::gemm_nt(d, a, b, c, accumulate);
}

void gemm_tn(GemmDims d, std::span<const double> a, std::span<const double> b, std::span<double> c, bool accumulate) {
	omp::gemm_tn(d, a, b, c, accumulate);
}

int available_threads() {
#ifdef _OPENMP
	return omp_in_parallel() ? 1 : omp_get_max_threads();
#else
	return 1;
#endif
}

} // namespace qdl::kernels
