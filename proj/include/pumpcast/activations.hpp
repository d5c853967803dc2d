#ifndef PUMPCAST_ACTIVATIONS_HPP
#define PUMPCAST_ACTIVATIONS_HPP

#include <cmath>
#include <span>

#include "pumpcast/linalg.hpp"

namespace pumpcast {

/// Logistic sigmoid, overflow-safe for |z| up to at least 500.
inline double sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

inline double tanh_act(double z) { return std::tanh(z); }

inline double sigmoid_derivative_from_output(double s) { return s * (1.0 - s); }

inline double tanh_derivative_from_output(double t) { return 1.0 - t * t; }

inline void sigmoid_inplace(Vector& v) {
    for (double& x : v) x = sigmoid(x);
}

inline void tanh_inplace(Vector& v) {
    for (double& x : v) x = std::tanh(x);
}

}  // namespace pumpcast

#endif  // PUMPCAST_ACTIVATIONS_HPP
