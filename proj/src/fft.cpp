#include "nslab/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <utility>

namespace nslab::fft {
namespace {

// FFTW's planner is not thread-safe; plans are created once under a lock
// and only executed (new-array interface) afterwards.
struct PlanCache {
    std::mutex mutex;
    std::map<std::pair<std::vector<int>, bool>, fftw_plan> plans;

    ~PlanCache()
    {
        for (auto& [key, plan] : plans)
            fftw_destroy_plan(plan);
    }
};

PlanCache& cache()
{
    static PlanCache instance;
    return instance;
}

std::size_t real_size(const std::vector<int>& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

fftw_plan get_plan(const std::vector<int>& shape, bool forward_dir)
{
    auto& c = cache();
    std::lock_guard lock(c.mutex);
    auto key = std::make_pair(shape, forward_dir);
    if (auto it = c.plans.find(key); it != c.plans.end())
        return it->second;

    std::vector<double> r(real_size(shape));
    std::vector<cplx> z(spectrum_size(shape));
    auto* zr = reinterpret_cast<fftw_complex*>(z.data());
    unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    fftw_plan plan = forward_dir
        ? fftw_plan_dft_r2c(static_cast<int>(shape.size()), shape.data(), r.data(), zr, flags)
        : fftw_plan_dft_c2r(static_cast<int>(shape.size()), shape.data(), zr, r.data(),
                            flags | FFTW_DESTROY_INPUT);
    if (!plan)
        throw std::runtime_error("fftw planning failed");
    c.plans.emplace(key, plan);
    return plan;
}

} // namespace

std::size_t spectrum_size(const std::vector<int>& shape)
{
    std::size_t s = 1;
    for (std::size_t a = 0; a + 1 < shape.size(); ++a)
        s *= static_cast<std::size_t>(shape[a]);
    return s * static_cast<std::size_t>(shape.back() / 2 + 1);
}

std::vector<cplx> forward(std::span<const double> in, const std::vector<int>& shape)
{
    if (in.size() != real_size(shape))
        throw std::invalid_argument("fft::forward: size mismatch");
    std::vector<double> buf(in.begin(), in.end());
    std::vector<cplx> out(spectrum_size(shape));
    fftw_execute_dft_r2c(get_plan(shape, true), buf.data(),
                         reinterpret_cast<fftw_complex*>(out.data()));
    return out;
}

void inverse(std::span<const cplx> in, const std::vector<int>& shape, std::span<double> out)
{
    if (in.size() != spectrum_size(shape) || out.size() != real_size(shape))
        throw std::invalid_argument("fft::inverse: size mismatch");
    std::vector<cplx> buf(in.begin(), in.end());
    fftw_execute_dft_c2r(get_plan(shape, false), reinterpret_cast<fftw_complex*>(buf.data()),
                         out.data());
    const double scale = 1.0 / static_cast<double>(out.size());
    for (auto& x : out)
        x *= scale;
}

void for_each_mode(const std::vector<int>& shape,
                   const std::function<void(std::size_t, std::span<const int>)>& fn)
{
    const int n = static_cast<int>(shape.size());
    std::vector<int> cshape(shape);
    cshape.back() = shape.back() / 2 + 1;
    std::vector<int> idx(n, 0), k(n, 0);
    const std::size_t total = spectrum_size(shape);
    for (std::size_t flat = 0; flat < total; ++flat) {
        for (int a = 0; a < n - 1; ++a)
            k[a] = wavenumber(idx[a], shape[a]);
        k[n - 1] = idx[n - 1];
        fn(flat, k);
        for (int a = n - 1; a >= 0; --a) {
            if (++idx[a] < cshape[a])
                break;
            idx[a] = 0;
        }
    }
}

PaddedConvolution::PaddedConvolution(
    std::vector<int> shape, const std::function<double(std::span<const int>)>& kernel)
    : shape_(std::move(shape))
{
    const int n = static_cast<int>(shape_.size());
    padded_.resize(n);
    for (int a = 0; a < n; ++a)
        padded_[a] = 2 * shape_[a];

    std::vector<double> k(real_size(padded_), 0.0);
    std::vector<int> idx(n, 0), d(n, 0);
    for (std::size_t flat = 0; flat < k.size(); ++flat) {
        bool inside = true;
        for (int a = 0; a < n; ++a) {
            // padded index p holds offset p (p < N) or p - 2N (p > N); p == N is unused
            const int p = idx[a];
            if (p == shape_[a]) {
                inside = false;
                break;
            }
            d[a] = p < shape_[a] ? p : p - padded_[a];
        }
        if (inside)
            k[flat] = kernel(d);
        for (int a = n - 1; a >= 0; --a) {
            if (++idx[a] < padded_[a])
                break;
            idx[a] = 0;
        }
    }
    kernel_hat_ = forward(k, padded_);
}

void PaddedConvolution::apply(std::span<const double> in, std::span<double> out) const
{
    const int n = static_cast<int>(shape_.size());
    const std::size_t total = real_size(shape_);
    if (in.size() != total || out.size() != total)
        throw std::invalid_argument("PaddedConvolution: size mismatch");

    std::vector<double> buf(real_size(padded_), 0.0);
    std::vector<int> idx(n, 0);
    auto padded_offset = [&](const std::vector<int>& i) {
        std::size_t off = 0;
        for (int a = 0; a < n; ++a)
            off = off * static_cast<std::size_t>(padded_[a]) + static_cast<std::size_t>(i[a]);
        return off;
    };
    for (std::size_t flat = 0; flat < total; ++flat) {
        buf[padded_offset(idx)] = in[flat];
        for (int a = n - 1; a >= 0; --a) {
            if (++idx[a] < shape_[a])
                break;
            idx[a] = 0;
        }
    }
    auto hat = forward(buf, padded_);
    for (std::size_t i = 0; i < hat.size(); ++i)
        hat[i] *= kernel_hat_[i];
    inverse(hat, padded_, buf);
    std::fill(idx.begin(), idx.end(), 0);
    for (std::size_t flat = 0; flat < total; ++flat) {
        out[flat] = buf[padded_offset(idx)];
        for (int a = n - 1; a >= 0; --a) {
            if (++idx[a] < shape_[a])
                break;
            idx[a] = 0;
        }
    }
}

} // namespace nslab::fft
