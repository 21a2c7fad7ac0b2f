#pragma once

// Minimal dense building blocks for the estimator. Feature maps are stored
// as (channels x height*width) column-major matrices, so each column is one
// pixel's channel vector and the raw buffer is in (row, col, channel) order,
// the same layout Grid2D uses.

#include "facewarp/estimator.hpp"

namespace facewarp::nn {

using Mat = RealMatrix;
using Vec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

struct ConvShape {
    int cin = 1;
    int cout = 1;
    int k = 3;
    int stride = 1;
    int pad = 1;

    int out_size(int n) const { return (n + 2 * pad - k) / stride + 1; }
};

/// col: (cin*k*k) x (ho*wo), row index (ci*k + ky)*k + kx.
void im2col(const Mat& in, int h, int w, const ConvShape& s, Mat& col);
/// Adds the column gradient back into an (cin x h*w) input gradient.
void col2im_add(const Mat& dcol, int h, int w, const ConvShape& s, Mat& din);

/// out = W col + b, W: cout x (cin*k*k), b: cout x 1.
void conv_forward(const Mat& weight, const Mat& bias, const Mat& col, Mat& out);
/// Accumulates dW, db and, when din is non-null, the input gradient.
void conv_backward(const Mat& weight, const Mat& col, const Mat& dout, int h, int w, const ConvShape& s,
                   Mat& dweight, Mat& dbias, Mat* din);

void relu_inplace(Mat& m);
/// dz = dy where y > 0, else 0.
void relu_backward(const Mat& y, Mat& dy);

}  // namespace facewarp::nn
