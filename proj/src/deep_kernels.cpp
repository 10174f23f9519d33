#include "syscade/deep/kernels.hpp"

#include "syscade/errors.hpp"

namespace syscade::deep {

namespace {

// Per-output-element arithmetic shared by the OpenMP and serial variants.
// Both variants call these with identical arguments in identical inner
// order, which is what makes them bit-comparable.

inline double conv1d_cell(const Tensor& X, const Tensor& W, long b, long t, long co) {
    const long T = X.shape[1], Ci = X.shape[2], K = W.shape[2];
    const long half = (K - 1) / 2;
    double acc = 0.0;
    for (long ci = 0; ci < Ci; ++ci) {
        for (long k = 0; k < K; ++k) {
            const long s = t + k - half;
            if (s < 0 || s >= T) continue;
            acc += X.at(b, s, ci) * W.at(co, ci, k);
        }
    }
    return acc;
}

inline double conv1d_dx_cell(const Tensor& W, const Tensor& dY, long b, long s, long ci) {
    const long T = dY.shape[1], Co = W.shape[0], K = W.shape[2];
    const long half = (K - 1) / 2;
    double acc = 0.0;
    for (long co = 0; co < Co; ++co) {
        for (long k = 0; k < K; ++k) {
            const long t = s - (k - half);
            if (t < 0 || t >= T) continue;
            acc += dY.at(b, t, co) * W.at(co, ci, k);
        }
    }
    return acc;
}

inline double conv1d_dw_cell(const Tensor& X, const Tensor& dY, long co, long ci, long k,
                             long half) {
    const long B = X.shape[0], T = X.shape[1];
    double acc = 0.0;
    for (long b = 0; b < B; ++b) {
        for (long t = 0; t < T; ++t) {
            const long s = t + k - half;
            if (s < 0 || s >= T) continue;
            acc += dY.at(b, t, co) * X.at(b, s, ci);
        }
    }
    return acc;
}

inline double atrous_cell(const Tensor& X, const Tensor& W, int r, long b, long t, long co) {
    const long T = X.shape[1], Ci = X.shape[2], K = W.shape[2];
    double acc = 0.0;
    for (long ci = 0; ci < Ci; ++ci) {
        for (long k = 1; k <= K; ++k) {
            const long s = t + static_cast<long>(r) * k;
            if (s >= T) continue;
            acc += X.at(b, s, ci) * W.at(co, ci, k - 1);
        }
    }
    return acc;
}

inline double atrous_dx_cell(const Tensor& W, const Tensor& dY, int r, long b, long s,
                             long ci) {
    const long Co = W.shape[0], K = W.shape[2];
    double acc = 0.0;
    for (long co = 0; co < Co; ++co) {
        for (long k = 1; k <= K; ++k) {
            const long t = s - static_cast<long>(r) * k;
            if (t < 0) continue;
            acc += dY.at(b, t, co) * W.at(co, ci, k - 1);
        }
    }
    return acc;
}

inline double atrous_dw_cell(const Tensor& X, const Tensor& dY, int r, long co, long ci,
                             long k1) {
    const long B = X.shape[0], T = X.shape[1];
    double acc = 0.0;
    for (long b = 0; b < B; ++b) {
        for (long t = 0; t < T; ++t) {
            const long s = t + static_cast<long>(r) * k1;
            if (s >= T) continue;
            acc += dY.at(b, t, co) * X.at(b, s, ci);
        }
    }
    return acc;
}

inline double dense_cell(const Tensor& X, const Tensor& W, const Tensor& b, long n, long o) {
    const long I = X.shape[1];
    double acc = b.at(o);
    for (long i = 0; i < I; ++i) acc += X.at(n, i) * W.at(o, i);
    return acc;
}

inline double dense_dx_cell(const Tensor& W, const Tensor& dY, long n, long i) {
    const long O = W.shape[0];
    double acc = 0.0;
    for (long o = 0; o < O; ++o) acc += dY.at(n, o) * W.at(o, i);
    return acc;
}

inline double dense_dw_cell(const Tensor& X, const Tensor& dY, long o, long i) {
    const long N = X.shape[0];
    double acc = 0.0;
    for (long n = 0; n < N; ++n) acc += dY.at(n, o) * X.at(n, i);
    return acc;
}

inline double dense_db_cell(const Tensor& dY, long o) {
    const long N = dY.shape[0];
    double acc = 0.0;
    for (long n = 0; n < N; ++n) acc += dY.at(n, o);
    return acc;
}

void check_seq(const Tensor& X, const Tensor& W, const Tensor& Y) {
    if (X.shape.size() != 3 || W.shape.size() != 3 || Y.shape.size() != 3 ||
        X.shape[2] != W.shape[1] || Y.shape[2] != W.shape[0] ||
        Y.shape[0] != X.shape[0] || Y.shape[1] != X.shape[1]) {
        throw ShapeError("convolution kernel shape mismatch");
    }
}

} // namespace

namespace kernels {

void conv1d_forward(const Tensor& X, const Tensor& W, Tensor& Y) {
    check_seq(X, W, Y);
    if (W.shape[2] % 2 == 0) throw ShapeError("centered convolution needs an odd kernel");
    const long B = X.shape[0], T = X.shape[1], Co = W.shape[0];
#pragma omp parallel for collapse(2) schedule(static)
    for (long b = 0; b < B; ++b) {
        for (long t = 0; t < T; ++t) {
            for (long co = 0; co < Co; ++co) Y.at(b, t, co) = conv1d_cell(X, W, b, t, co);
        }
    }
}

void conv1d_backward(const Tensor& X, const Tensor& W, const Tensor& dY, Tensor& dX,
                     Tensor& dW) {
    const long B = X.shape[0], T = X.shape[1], Ci = X.shape[2];
    const long Co = W.shape[0], K = W.shape[2], half = (K - 1) / 2;
#pragma omp parallel for collapse(2) schedule(static)
    for (long b = 0; b < B; ++b) {
        for (long s = 0; s < T; ++s) {
            for (long ci = 0; ci < Ci; ++ci) dX.at(b, s, ci) = conv1d_dx_cell(W, dY, b, s, ci);
        }
    }
#pragma omp parallel for collapse(2) schedule(static)
    for (long co = 0; co < Co; ++co) {
        for (long ci = 0; ci < Ci; ++ci) {
            for (long k = 0; k < K; ++k) dW.at(co, ci, k) = conv1d_dw_cell(X, dY, co, ci, k, half);
        }
    }
}

void atrous_forward(const Tensor& X, const Tensor& W, int r, Tensor& Y) {
    check_seq(X, W, Y);
    if (r < 1) throw ShapeError("dilation ratio must be >= 1");
    const long B = X.shape[0], T = X.shape[1], Co = W.shape[0];
#pragma omp parallel for collapse(2) schedule(static)
    for (long b = 0; b < B; ++b) {
        for (long t = 0; t < T; ++t) {
            for (long co = 0; co < Co; ++co) Y.at(b, t, co) = atrous_cell(X, W, r, b, t, co);
        }
    }
}

void atrous_backward(const Tensor& X, const Tensor& W, int r, const Tensor& dY, Tensor& dX,
                     Tensor& dW) {
    const long B = X.shape[0], T = X.shape[1], Ci = X.shape[2];
    const long Co = W.shape[0], K = W.shape[2];
#pragma omp parallel for collapse(2) schedule(static)
    for (long b = 0; b < B; ++b) {
        for (long s = 0; s < T; ++s) {
            for (long ci = 0; ci < Ci; ++ci) dX.at(b, s, ci) = atrous_dx_cell(W, dY, r, b, s, ci);
        }
    }
#pragma omp parallel for collapse(2) schedule(static)
    for (long co = 0; co < Co; ++co) {
        for (long ci = 0; ci < Ci; ++ci) {
            for (long k = 1; k <= K; ++k) {
                dW.at(co, ci, k - 1) = atrous_dw_cell(X, dY, r, co, ci, k);
            }
        }
    }
}

void dense_forward(const Tensor& X, const Tensor& W, const Tensor& b, Tensor& Y) {
    const long N = X.shape[0], O = W.shape[0];
#pragma omp parallel for schedule(static)
    for (long n = 0; n < N; ++n) {
        for (long o = 0; o < O; ++o) Y.at(n, o) = dense_cell(X, W, b, n, o);
    }
}

void dense_backward(const Tensor& X, const Tensor& W, const Tensor& dY, Tensor& dX,
                    Tensor& dW, Tensor& db) {
    const long N = X.shape[0], I = X.shape[1], O = W.shape[0];
#pragma omp parallel for schedule(static)
    for (long n = 0; n < N; ++n) {
        for (long i = 0; i < I; ++i) dX.at(n, i) = dense_dx_cell(W, dY, n, i);
    }
#pragma omp parallel for schedule(static)
    for (long o = 0; o < O; ++o) {
        for (long i = 0; i < I; ++i) dW.at(o, i) = dense_dw_cell(X, dY, o, i);
        db.at(o) = dense_db_cell(dY, o);
    }
}

} // namespace kernels

namespace serial {

void conv1d_forward(const Tensor& X, const Tensor& W, Tensor& Y) {
    check_seq(X, W, Y);
    if (W.shape[2] % 2 == 0) throw ShapeError("centered convolution needs an odd kernel");
    const long B = X.shape[0], T = X.shape[1], Co = W.shape[0];
    for (long b = 0; b < B; ++b) {
        for (long t = 0; t < T; ++t) {
            for (long co = 0; co < Co; ++co) Y.at(b, t, co) = conv1d_cell(X, W, b, t, co);
        }
    }
}

void conv1d_backward(const Tensor& X, const Tensor& W, const Tensor& dY, Tensor& dX,
                     Tensor& dW) {
    const long B = X.shape[0], T = X.shape[1], Ci = X.shape[2];
    const long Co = W.shape[0], K = W.shape[2], half = (K - 1) / 2;
    for (long b = 0; b < B; ++b) {
        for (long s = 0; s < T; ++s) {
            for (long ci = 0; ci < Ci; ++ci) dX.at(b, s, ci) = conv1d_dx_cell(W, dY, b, s, ci);
        }
    }
    for (long co = 0; co < Co; ++co) {
        for (long ci = 0; ci < Ci; ++ci) {
            for (long k = 0; k < K; ++k) dW.at(co, ci, k) = conv1d_dw_cell(X, dY, co, ci, k, half);
        }
    }
}

void atrous_forward(const Tensor& X, const Tensor& W, int r, Tensor& Y) {
    check_seq(X, W, Y);
    if (r < 1) throw ShapeError("dilation ratio must be >= 1");
    const long B = X.shape[0], T = X.shape[1], Co = W.shape[0];
    for (long b = 0; b < B; ++b) {
        for (long t = 0; t < T; ++t) {
            for (long co = 0; co < Co; ++co) Y.at(b, t, co) = atrous_cell(X, W, r, b, t, co);
        }
    }
}

void atrous_backward(const Tensor& X, const Tensor& W, int r, const Tensor& dY, Tensor& dX,
                     Tensor& dW) {
    const long B = X.shape[0], T = X.shape[1], Ci = X.shape[2];
    const long Co = W.shape[0], K = W.shape[2];
    for (long b = 0; b < B; ++b) {
        for (long s = 0; s < T; ++s) {
            for (long ci = 0; ci < Ci; ++ci) dX.at(b, s, ci) = atrous_dx_cell(W, dY, r, b, s, ci);
        }
    }
    for (long co = 0; co < Co; ++co) {
        for (long ci = 0; ci < Ci; ++ci) {
            for (long k = 1; k <= K; ++k) {
                dW.at(co, ci, k - 1) = atrous_dw_cell(X, dY, r, co, ci, k);
            }
        }
    }
}

void dense_forward(const Tensor& X, const Tensor& W, const Tensor& b, Tensor& Y) {
    const long N = X.shape[0], O = W.shape[0];
    for (long n = 0; n < N; ++n) {
        for (long o = 0; o < O; ++o) Y.at(n, o) = dense_cell(X, W, b, n, o);
    }
}

void dense_backward(const Tensor& X, const Tensor& W, const Tensor& dY, Tensor& dX,
                    Tensor& dW, Tensor& db) {
    const long N = X.shape[0], I = X.shape[1], O = W.shape[0];
    for (long n = 0; n < N; ++n) {
        for (long i = 0; i < I; ++i) dX.at(n, i) = dense_dx_cell(W, dY, n, i);
    }
    for (long o = 0; o < O; ++o) {
        for (long i = 0; i < I; ++i) dW.at(o, i) = dense_dw_cell(X, dY, o, i);
        db.at(o) = dense_db_cell(dY, o);
    }
}

} // namespace serial

} // namespace syscade::deep
