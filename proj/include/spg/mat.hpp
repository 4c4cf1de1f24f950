#pragma once

// Row-major dense matrix and the three product kernels the nets are built
// on. The inner loops run over contiguous memory so -O3 vectorises them.

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <vector>

namespace spg {

struct Mat {
    std::size_t rows = 0, cols = 0;
    std::vector<double> d;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), d(r * c, fill) {}

    double* row(std::size_t i) { return d.data() + i * cols; }
    const double* row(std::size_t i) const { return d.data() + i * cols; }
    double& operator()(std::size_t i, std::size_t j) { return d[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return d[i * cols + j]; }

    void resize(std::size_t r, std::size_t c) {
        rows = r;
        cols = c;
        d.assign(r * c, 0.0);
    }
    void zero() { std::fill(d.begin(), d.end(), 0.0); }
};

// C = A * B^T.  A: n x k, B: m x k, C: n x m.
inline void gemm_nt(const Mat& A, const Mat& B, Mat& C) {
    assert(A.cols == B.cols);
    C.resize(A.rows, B.rows);
    for (std::size_t i = 0; i < A.rows; ++i) {
        const double* a = A.row(i);
        double* c = C.row(i);
        for (std::size_t j = 0; j < B.rows; ++j) {
            const double* b = B.row(j);
            double s = 0.0;
            for (std::size_t p = 0; p < A.cols; ++p) s += a[p] * b[p];
            c[j] = s;
        }
    }
}

// C = A * B.  A: n x k, B: k x m, C: n x m.
inline void gemm_nn(const Mat& A, const Mat& B, Mat& C) {
    assert(A.cols == B.rows);
    C.resize(A.rows, B.cols);
    for (std::size_t i = 0; i < A.rows; ++i) {
        const double* a = A.row(i);
        double* c = C.row(i);
        for (std::size_t p = 0; p < A.cols; ++p) {
            double av = a[p];
            const double* b = B.row(p);
            for (std::size_t j = 0; j < B.cols; ++j) c[j] += av * b[j];
        }
    }
}

// C += A^T * B.  A: n x m, B: n x k, C: m x k.  C must be pre-sized.
inline void gemm_tn_acc(const Mat& A, const Mat& B, Mat& C) {
    assert(A.rows == B.rows && C.rows == A.cols && C.cols == B.cols);
    for (std::size_t i = 0; i < A.rows; ++i) {
        const double* a = A.row(i);
        const double* b = B.row(i);
        for (std::size_t p = 0; p < A.cols; ++p) {
            double av = a[p];
            if (av == 0.0) continue;
            double* c = C.row(p);
            for (std::size_t j = 0; j < B.cols; ++j) c[j] += av * b[j];
        }
    }
}

}  // namespace spg
