#include "ctxmeter/finite_diff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ctxmeter::autodiff {

Tensor finite_difference_jacobian(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                  double step) {
    if (step <= 0.0) throw std::invalid_argument("finite_difference_jacobian: step must be > 0");

    Tensor probe = x;
    const int64_t in_dim = x.numel();
    Tensor jacobian;

    for (int64_t j = 0; j < in_dim; ++j) {
        const double original = probe[j];
        probe[j] = original + step;
        const Tensor plus = f(probe);
        probe[j] = original - step;
        const Tensor minus = f(probe);
        probe[j] = original;

        if (!plus.same_shape(minus)) {
            throw std::invalid_argument("finite_difference_jacobian: f output shape changed at "
                                        "input coordinate " + std::to_string(j));
        }
        if (jacobian.empty()) {
            jacobian = Tensor({plus.numel(), in_dim});
        }
        for (int64_t i = 0; i < plus.numel(); ++i) {
            const double d = (plus[i] - minus[i]) / (2.0 * step);
            if (!std::isfinite(d)) {
                throw std::runtime_error(
                    "finite_difference_jacobian: non-finite derivative at output coordinate " +
                    std::to_string(i) + ", input coordinate " + std::to_string(j));
            }
            jacobian(i, j) = d;
        }
    }
    return jacobian;
}

}  // namespace ctxmeter::autodiff
