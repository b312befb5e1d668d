#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace nslab::fft {

using cplx = std::complex<double>;

/// Number of complex coefficients of the real-to-complex transform of `shape`
/// (last axis stored as shape.back()/2 + 1).
std::size_t spectrum_size(const std::vector<int>& shape);

/// Unnormalised forward transform sum_x f(x) exp(-2 pi i k.x/N).
std::vector<cplx> forward(std::span<const double> in, const std::vector<int>& shape);

/// Normalised inverse (divides by the number of points), so that
/// inverse(forward(f)) == f.
void inverse(std::span<const cplx> in, const std::vector<int>& shape, std::span<double> out);

/// Signed integer wavenumber of index i on an axis of length n.
inline int wavenumber(int i, int n) { return i <= n / 2 ? i : i - n; }

/// Visits every stored coefficient of the half spectrum with its signed
/// integer wavenumbers (one per axis).
void for_each_mode(const std::vector<int>& shape,
                   const std::function<void(std::size_t, std::span<const int>)>& fn);

/// Linear (non-circular) convolution of arrays of shape N with a kernel known
/// on offsets d in [-(N-1), N-1] per axis, via 2N zero padding:
///   out[i] = sum_j kernel(i - j) * in[j].
class PaddedConvolution {
public:
    /// `kernel(d)` is evaluated once per offset.
    PaddedConvolution(std::vector<int> shape,
                      const std::function<double(std::span<const int>)>& kernel);

    void apply(std::span<const double> in, std::span<double> out) const;
    const std::vector<int>& shape() const { return shape_; }

private:
    std::vector<int> shape_;
    std::vector<int> padded_;
    std::vector<cplx> kernel_hat_;
};

} // namespace nslab::fft
