#pragma once

#include "hsi/autodiff.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace hsi::ad {

// Bias-corrected Adam over a fixed list of parameter matrices.
template <class T>
struct AdamState {
    using Mat = Matrix<T>;

    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::vector<Mat> m;
    std::vector<Mat> v;

    AdamState() = default;
    explicit AdamState(double learning_rate) : lr(learning_rate) {}

    // params[i] -= lr * mhat / (sqrt(vhat) + eps). Empty gradients count as zero.
    void update(const std::vector<Mat*>& params, const std::vector<Mat>& grads)
    {
        if (params.size() != grads.size()) {
            throw Error("adam: " + std::to_string(params.size()) + " parameters but " + std::to_string(grads.size()) +
                        " gradients");
        }
        if (m.empty()) {
            for (const Mat* p : params) {
                m.push_back(Mat::Zero(p->rows(), p->cols()));
                v.push_back(Mat::Zero(p->rows(), p->cols()));
            }
        }
        if (m.size() != params.size()) {
            throw Error("adam: parameter count changed between steps");
        }
        ++step;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        for (std::size_t i = 0; i < params.size(); ++i) {
            Mat& p = *params[i];
            const Mat& g = grads[i];
            if (p.rows() != m[i].rows() || p.cols() != m[i].cols()) {
                throw Error("adam: parameter " + std::to_string(i) + " changed shape");
            }
            if (g.size() == 0) {
                m[i] *= static_cast<T>(beta1);
                v[i] *= static_cast<T>(beta2);
            } else {
                if (g.rows() != p.rows() || g.cols() != p.cols()) {
                    throw Error("adam: gradient " + std::to_string(i) + " is " + std::to_string(g.rows()) + "x" +
                                std::to_string(g.cols()) + ", parameter is " + std::to_string(p.rows()) + "x" +
                                std::to_string(p.cols()));
                }
                m[i] = static_cast<T>(beta1) * m[i] + static_cast<T>(1.0 - beta1) * g;
                v[i] = static_cast<T>(beta2) * v[i] + static_cast<T>(1.0 - beta2) * g.cwiseAbs2();
            }
            p.array() -= static_cast<T>(lr) * (m[i].array() / static_cast<T>(c1)) /
                         ((v[i].array() / static_cast<T>(c2)).sqrt() + static_cast<T>(eps));
        }
    }
};

} // namespace hsi::ad
