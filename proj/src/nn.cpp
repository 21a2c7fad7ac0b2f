#include "nn.hpp"

namespace facewarp::nn {

void im2col(const Mat& in, int h, int w, const ConvShape& s, Mat& col) {
    const int ho = s.out_size(h);
    const int wo = s.out_size(w);
    col.setZero(s.cin * s.k * s.k, ho * wo);
    for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
            const int o = oy * wo + ox;
            for (int ky = 0; ky < s.k; ++ky) {
                const int iy = oy * s.stride - s.pad + ky;
                if (iy < 0 || iy >= h) {
                    continue;
                }
                for (int kx = 0; kx < s.k; ++kx) {
                    const int ix = ox * s.stride - s.pad + kx;
                    if (ix < 0 || ix >= w) {
                        continue;
                    }
                    const int i = iy * w + ix;
                    for (int ci = 0; ci < s.cin; ++ci) {
                        col((ci * s.k + ky) * s.k + kx, o) = in(ci, i);
                    }
                }
            }
        }
    }
}

void col2im_add(const Mat& dcol, int h, int w, const ConvShape& s, Mat& din) {
    const int ho = s.out_size(h);
    const int wo = s.out_size(w);
    for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
            const int o = oy * wo + ox;
            for (int ky = 0; ky < s.k; ++ky) {
                const int iy = oy * s.stride - s.pad + ky;
                if (iy < 0 || iy >= h) {
                    continue;
                }
                for (int kx = 0; kx < s.k; ++kx) {
                    const int ix = ox * s.stride - s.pad + kx;
                    if (ix < 0 || ix >= w) {
                        continue;
                    }
                    const int i = iy * w + ix;
                    for (int ci = 0; ci < s.cin; ++ci) {
                        din(ci, i) += dcol((ci * s.k + ky) * s.k + kx, o);
                    }
                }
            }
        }
    }
}

void conv_forward(const Mat& weight, const Mat& bias, const Mat& col, Mat& out) {
    out.noalias() = weight * col;
    out.colwise() += bias.col(0);
}

void conv_backward(const Mat& weight, const Mat& col, const Mat& dout, int h, int w, const ConvShape& s,
                   Mat& dweight, Mat& dbias, Mat* din) {
    dweight.noalias() += dout * col.transpose();
    dbias.col(0) += dout.rowwise().sum();
    if (din != nullptr) {
        const Mat dcol = weight.transpose() * dout;
        col2im_add(dcol, h, w, s, *din);
    }
}

void relu_inplace(Mat& m) { m = m.cwiseMax(Real(0)); }

void relu_backward(const Mat& y, Mat& dy) {
    dy = (y.array() > Real(0)).select(dy, Real(0));
}

}  // namespace facewarp::nn
