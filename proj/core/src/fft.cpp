#include "mplex/fft.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>

namespace mplex {

namespace {

std::vector<std::size_t> prime_factors(std::size_t n) {
    std::vector<std::size_t> f;
    for (std::size_t p : {4u, 2u, 3u, 5u}) {
        while (n % p == 0) {
            f.push_back(p);
            n /= p;
        }
    }
    for (std::size_t p = 7; p * p <= n; p += 2) {
        while (n % p == 0) {
            f.push_back(p);
            n /= p;
        }
    }
    if (n > 1) f.push_back(n);
    return f;
}

// Plain complex product; std::complex's operator* goes through the Annex G NaN/inf path.
inline cplx mul(cplx a, cplx b) noexcept {
    return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

std::size_t next_pow2(std::size_t n) {
    std::size_t m = 1;
    while (m < n) m <<= 1;
    return m;
}

const Fft1d& cached_plan(std::size_t n) {
    thread_local std::map<std::size_t, Fft1d> cache;
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, Fft1d(n)).first;
    return it->second;
}

}  // namespace

struct Fft1d::Bluestein {
    std::size_t m = 0;
    std::unique_ptr<Fft1d> conv;
    std::vector<cplx> chirp;      // exp(-i*pi*j^2/n)
    std::vector<cplx> kernel_hat; // FFT of conj(chirp) arranged for circular convolution
};

Fft1d::Fft1d(std::size_t n) : n_(n) {
    if (n == 0) throw std::invalid_argument("Fft1d: length must be positive");
    factors_ = prime_factors(n);

    bool large_prime = false;
    for (auto p : factors_) large_prime |= p > kMaxDirectRadix;

    if (!large_prime) {
        twiddle_.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
            twiddle_[k] = {std::cos(a), std::sin(a)};
        }
        return;
    }

    auto b = std::make_unique<Bluestein>();
    b->m = next_pow2(2 * n - 1);
    b->conv = std::make_unique<Fft1d>(b->m);
    b->chirp.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        // j^2 mod 2n keeps the angle small for long transforms.
        const std::size_t jj = (j * j) % (2 * n);
        const double a = -std::numbers::pi * static_cast<double>(jj) / static_cast<double>(n);
        b->chirp[j] = {std::cos(a), std::sin(a)};
    }
    b->kernel_hat.assign(b->m, cplx{});
    b->kernel_hat[0] = std::conj(b->chirp[0]);
    for (std::size_t j = 1; j < n; ++j) {
        b->kernel_hat[j] = std::conj(b->chirp[j]);
        b->kernel_hat[b->m - j] = std::conj(b->chirp[j]);
    }
    b->conv->transform(b->kernel_hat, false);
    bluestein_ = std::move(b);
}

Fft1d::~Fft1d() = default;
Fft1d::Fft1d(Fft1d&&) noexcept = default;
Fft1d& Fft1d::operator=(Fft1d&&) noexcept = default;

void Fft1d::mixed_radix(const cplx* in, std::size_t stride, cplx* out, std::size_t n, std::size_t level,
                        bool inverse) const {
    if (n == 1) {
        out[0] = in[0];
        return;
    }
    const std::size_t p = factors_[level];
    const std::size_t m = n / p;
    if (m == 1) {
        for (std::size_t r = 0; r < p; ++r) out[r] = in[r * stride];
    } else {
        for (std::size_t r = 0; r < p; ++r) mixed_radix(in + r * stride, stride * p, out + r * m, m, level + 1, inverse);
    }

    // Sub-transform r occupies out[r*m .. r*m+m); the outputs X[k + q*m] reuse
    // exactly the slots {r*m + k}, so each k is combined in place.
    const std::size_t tw_step = n_ / n;      // W_n = W_N^(N/n)
    const std::size_t p_step = n_ / p;       // W_p = W_N^(N/p)
    // Indices passed here are always below n_.
    auto tw = [&](std::size_t idx) { return inverse ? std::conj(twiddle_[idx]) : twiddle_[idx]; };
    // -i or +i times v.
    auto rot = [inverse](cplx v) { return inverse ? cplx(-v.imag(), v.real()) : cplx(v.imag(), -v.real()); };
    constexpr double sin60 = 0.86602540378443864676;

    cplx t[kMaxDirectRadix];
    for (std::size_t k = 0; k < m; ++k) {
        t[0] = out[k];
        for (std::size_t r = 1; r < p; ++r) t[r] = k == 0 ? out[r * m] : mul(out[r * m + k], tw(r * k * tw_step));
        if (p == 2) {
            out[k] = t[0] + t[1];
            out[k + m] = t[0] - t[1];
        } else if (p == 3) {
            const cplx s = t[1] + t[2];
            const cplx d = rot(t[2] - t[1]) * -sin60;
            const cplx c = t[0] - 0.5 * s;
            out[k] = t[0] + s;
            out[k + m] = c + d;
            out[k + 2 * m] = c - d;
        } else if (p == 4) {
            const cplx a = t[0] + t[2];
            const cplx b = t[0] - t[2];
            const cplx c = t[1] + t[3];
            const cplx d = rot(t[1] - t[3]);
            out[k] = a + c;
            out[k + m] = b + d;
            out[k + 2 * m] = a - c;
            out[k + 3 * m] = b - d;
        } else {
            for (std::size_t q = 0; q < p; ++q) {
                cplx acc = t[0];
                for (std::size_t r = 1; r < p; ++r) acc += mul(t[r], tw(((r * q) % p) * p_step));
                out[k + q * m] = acc;
            }
        }
    }
}

void Fft1d::transform(std::span<cplx> data, bool inverse) const {
    if (data.size() != n_) throw std::invalid_argument("Fft1d: buffer length mismatch");
    if (n_ == 1) return;

    if (!bluestein_) {
        thread_local std::vector<cplx> in;
        in.assign(data.begin(), data.end());
        mixed_radix(in.data(), 1, data.data(), n_, 0, inverse);
        return;
    }

    const auto& b = *bluestein_;
    std::vector<cplx> a(b.m, cplx{});
    // The inverse transform is conj(F(conj(x))).
    for (std::size_t j = 0; j < n_; ++j) a[j] = (inverse ? std::conj(data[j]) : data[j]) * b.chirp[j];
    b.conv->transform(a, false);
    for (std::size_t j = 0; j < b.m; ++j) a[j] = mul(a[j], b.kernel_hat[j]);
    b.conv->transform(a, true);
    const double inv_m = 1.0 / static_cast<double>(b.m);
    for (std::size_t k = 0; k < n_; ++k) {
        const cplx v = a[k] * inv_m * b.chirp[k];
        data[k] = inverse ? std::conj(v) : v;
    }
}

void fft3_centered_inplace(std::span<cplx> data, const Dims& dims, bool inverse) {
    validate_dims(dims);
    if (data.size() != dims.voxels()) throw std::invalid_argument("fft3: buffer length mismatch");

    const std::size_t n[3] = {dims.nx, dims.ny, dims.nz};
    const std::size_t stride[3] = {1, dims.nx, dims.nx * dims.ny};

    for (int axis = 0; axis < 3; ++axis) {
        const std::size_t len = n[axis];
        if (len == 1) continue;
        const Fft1d& plan = cached_plan(len);
        const std::size_t half = len / 2;
        std::vector<cplx> line(len);

        // Iterate over every line along `axis`.
        const std::size_t other_a = axis == 0 ? n[1] : n[0];
        const std::size_t other_b = axis == 2 ? n[1] : n[2];
        const std::size_t stride_a = axis == 0 ? stride[1] : stride[0];
        const std::size_t stride_b = axis == 2 ? stride[1] : stride[2];
        for (std::size_t b = 0; b < other_b; ++b) {
            for (std::size_t a = 0; a < other_a; ++a) {
                const std::size_t base = a * stride_a + b * stride_b;
                // ifftshift on the way in, fftshift on the way out: line[i] <-> data[(i + half) % len].
                cplx* p = data.data() + base;
                const std::size_t st = stride[axis];
                for (std::size_t i = 0; i < len - half; ++i) line[i] = p[(i + half) * st];
                for (std::size_t i = len - half; i < len; ++i) line[i] = p[(i + half - len) * st];
                plan.transform(line, inverse);
                for (std::size_t i = 0; i < len - half; ++i) p[(i + half) * st] = line[i];
                for (std::size_t i = len - half; i < len; ++i) p[(i + half - len) * st] = line[i];
            }
        }
    }

    const double scale = 1.0 / std::sqrt(static_cast<double>(dims.voxels()));
    for (auto& v : data) v *= scale;
}

ComplexVolume fft3_centered(const ComplexVolume& image) {
    ComplexVolume out = image.with_domain(Domain::kspace);
    fft3_centered_inplace(out.data(), out.dims(), false);
    return out;
}

ComplexVolume ifft3_centered(const ComplexVolume& kspace) {
    ComplexVolume out = kspace.with_domain(Domain::image);
    fft3_centered_inplace(out.data(), out.dims(), true);
    return out;
}

}  // namespace mplex
