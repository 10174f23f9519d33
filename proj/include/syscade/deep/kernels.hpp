#pragma once

#include "syscade/deep/tensor.hpp"

namespace syscade::deep {

// Sequence-model compute kernels. `kernels` is the production namespace,
// parallelized with OpenMP over independent output elements; `serial` holds
// the plain-loop reference implementations. Both share the same per-element
// arithmetic (fixed-order inner summations), so their outputs are
// bit-identical at any thread count — the test suite and the benchmark
// target compare them directly.
//
// Shapes: sequence tensors are [B, T, C] (batch, time, channel), weights are
// [Cout, Cin, K], dense inputs are [N, In] with weights [Out, In].

namespace kernels {

// Centered same-length convolution: tap k of K reads offset k - (K-1)/2.
// Out-of-range positions read zero. K must be odd.
void conv1d_forward(const Tensor& X, const Tensor& W, Tensor& Y);
void conv1d_backward(const Tensor& X, const Tensor& W, const Tensor& dY,
                     Tensor& dX, Tensor& dW);

// Dilated forward-looking convolution: y(i) = sum over taps k = 1..K of
// x(i + r*k) * w(k), zero outside bounds, summed across input channels.
void atrous_forward(const Tensor& X, const Tensor& W, int r, Tensor& Y);
void atrous_backward(const Tensor& X, const Tensor& W, int r, const Tensor& dY,
                     Tensor& dX, Tensor& dW);

// Fully connected: Y = X * W^T + b.
void dense_forward(const Tensor& X, const Tensor& W, const Tensor& b, Tensor& Y);
void dense_backward(const Tensor& X, const Tensor& W, const Tensor& dY,
                    Tensor& dX, Tensor& dW, Tensor& db);

} // namespace kernels

namespace serial {

void conv1d_forward(const Tensor& X, const Tensor& W, Tensor& Y);
void conv1d_backward(const Tensor& X, const Tensor& W, const Tensor& dY,
                     Tensor& dX, Tensor& dW);
void atrous_forward(const Tensor& X, const Tensor& W, int r, Tensor& Y);
void atrous_backward(const Tensor& X, const Tensor& W, int r, const Tensor& dY,
                     Tensor& dX, Tensor& dW);
void dense_forward(const Tensor& X, const Tensor& W, const Tensor& b, Tensor& Y);
void dense_backward(const Tensor& X, const Tensor& W, const Tensor& dY,
                    Tensor& dX, Tensor& dW, Tensor& db);

} // namespace serial

} // namespace syscade::deep
