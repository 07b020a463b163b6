#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rydsim/random.hpp"
#include "rydsim/units.hpp"

// Heterodyne detection records and the averaging estimators for amplitude and
// phase change.
//
// Traces live in photon-flux units at the cavity output: a steady tone with
// |A|^2 = n_c * kappa_out carries that many signal photons per second. The
// additive noise is circular complex Gaussian with per-sample variance
//
//     var(I) + var(Q) = 2 * n_noise / dt,
//
// which ties n_noise to the sampling bandwidth such that the phase spread of a
// trace integrated for tau is exactly 1/sqrt(SNR) with
// SNR = n_c * kappa_out * tau / n_noise. Averaging W samples into one bin
// leaves the same rule with dt -> W*dt, so the calibration is aggregation
// invariant.
//
// Multi-cycle records: the estimators consume one IQTrace per arm holding
// k = inner_averages * outer_averages equal-length cycles concatenated
// back-to-back (cycle-major). The AveragingPlan tells the estimator how to
// segment the record; inner groups are averaged first (as the FPGA would),
// the estimator statistics run over the outer blocks.

namespace rydsim {

struct IQTrace {
    std::vector<std::complex<double>> samples; // complex amplitude, flux^(1/2) units
    double dt = 0.0;                           // sampling interval (s)
    double t0 = 0.0;                           // time of samples[0] (s)

    std::size_t size() const { return samples.size(); }
    double duration() const { return static_cast<double>(samples.size()) * dt; }

    void validate() const {
        if (!(dt > 0.0))
            throw std::invalid_argument("IQTrace: dt must be > 0");
        for (const auto& s : samples)
            if (!std::isfinite(s.real()) || !std::isfinite(s.imag()))
                throw std::invalid_argument("IQTrace: samples must be finite");
    }
};

struct NoiseModel {
    double n_noise = 0.0;      // effective noise photons referred to the cavity output
    double psd = 0.0;          // noise power spectral density (W/Hz), optional
    double gain = 0.0;         // total chain gain, optional
    double drift_rate = 0.0;   // slow signal-vs-LO phase drift (rad per wall-clock second)
    double phase_offset = 0.0; // artificial signal-vs-reference offset (rad)
    std::uint64_t seed = 0;

    void validate() const {
        if (n_noise < 0.0)
            throw std::invalid_argument("NoiseModel: n_noise must be >= 0");
        if (!std::isfinite(drift_rate))
            throw std::invalid_argument("NoiseModel: drift_rate must be finite");
    }
};

struct AveragingPlan {
    std::size_t inner_averages = 100; // cycles averaged before the estimator
    std::size_t outer_averages = 500; // repetitions of inner blocks
    double boxcar_len = 100e-9;       // digital filter length (s)

    std::size_t cycles() const { return inner_averages * outer_averages; }

    void validate() const {
        if (inner_averages < 1 || outer_averages < 1)
            throw std::invalid_argument("AveragingPlan: averages must be >= 1");
        if (!(boxcar_len > 0.0))
            throw std::invalid_argument("AveragingPlan: boxcar_len must be > 0");
    }
};

/// Total complex noise variance per sample for a given sampling interval.
inline double per_sample_noise_variance(double n_noise, double dt) { return 2.0 * n_noise / dt; }

namespace detail {

/// floor(window/dt), tolerant of ratios sitting one representation error
/// below an integer.
inline std::size_t samples_in(double window, double dt) {
    return static_cast<std::size_t>(window / dt * (1.0 + 1e-12));
}

} // namespace detail

/// Synthesize one trace: samples[i] = signal_fn(t_i) * exp(i*drift*t_i) + noise,
/// t_i = t0 + i*dt. Deterministic for a given noise.seed.
template <typename SignalFn>
IQTrace synthesize_trace(SignalFn&& signal_fn, const NoiseModel& noise, double dt, double duration,
                         double t0 = 0.0) {
    if (!(dt > 0.0) || duration < dt)
        throw std::invalid_argument("synthesize_trace: need duration >= dt > 0");
    const auto n = static_cast<std::size_t>(std::llround(duration / dt));
    GaussianSampler sampler(noise.seed);
    const double variance = per_sample_noise_variance(noise.n_noise, dt);
    IQTrace trace;
    trace.dt = dt;
    trace.t0 = t0;
    trace.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = t0 + static_cast<double>(i) * dt;
        std::complex<double> s = signal_fn(t);
        if (noise.drift_rate != 0.0)
            s *= std::polar(1.0, noise.drift_rate * t);
        if (noise.n_noise > 0.0)
            s += sampler.complex_normal(variance);
        trace.samples[i] = s;
    }
    return trace;
}

/// Synthesize n_cycles repetitions of the same nominal trace, concatenated
/// cycle-major. Cycle c starts at wall-clock time c*cycle_period, so a slow
/// drift rotates whole cycles; the noise stream is drawn sequentially from
/// noise.seed. signal_fn sees the in-cycle time t0 + i*dt.
template <typename SignalFn>
IQTrace synthesize_cycle_record(SignalFn&& signal_fn, const NoiseModel& noise, double dt,
                                double cycle_duration, std::size_t n_cycles, double cycle_period,
                                double t0 = 0.0) {
    if (!(dt > 0.0) || cycle_duration < dt)
        throw std::invalid_argument("synthesize_cycle_record: need cycle_duration >= dt > 0");
    if (n_cycles < 1)
        throw std::invalid_argument("synthesize_cycle_record: need n_cycles >= 1");
    const auto len = static_cast<std::size_t>(std::llround(cycle_duration / dt));
    GaussianSampler sampler(noise.seed);
    const double variance = per_sample_noise_variance(noise.n_noise, dt);
    IQTrace record;
    record.dt = dt;
    record.t0 = t0;
    record.samples.resize(n_cycles * len);
    for (std::size_t c = 0; c < n_cycles; ++c) {
        const double wall0 = static_cast<double>(c) * cycle_period;
        for (std::size_t i = 0; i < len; ++i) {
            const double t = t0 + static_cast<double>(i) * dt;
            std::complex<double> s = signal_fn(t);
            if (noise.drift_rate != 0.0)
                s *= std::polar(1.0, noise.drift_rate * (wall0 + t));
            if (noise.n_noise > 0.0)
                s += sampler.complex_normal(variance);
            record.samples[c * len + i] = s;
        }
    }
    return record;
}

/// Fast path for paper-scale records: emit the inner-averaged blocks directly.
/// Averaging `inner` i.i.d. Gaussians is again Gaussian with variance/inner,
/// and the linear drift enters each block through the exact mean phase factor
/// of its cycles, so the output is distributed identically to inner-averaging
/// a synthesize_cycle_record (in-cycle drift, ~1e-7 deg here, neglected).
/// The result holds plan.outer_averages "cycles" of n_bins bins; estimate it
/// with block_estimator_plan(plan). bin_signal sees bin-center times.
template <typename BinFn>
IQTrace synthesize_block_record(BinFn&& bin_signal, const NoiseModel& noise,
                                const AveragingPlan& plan, double cycle_period, double bin_dt,
                                std::size_t n_bins, double t_start, GaussianSampler& sampler) {
    plan.validate();
    if (!(bin_dt > 0.0) || n_bins == 0)
        throw std::invalid_argument("synthesize_block_record: need n_bins >= 1, bin_dt > 0");
    const double variance = per_sample_noise_variance(noise.n_noise, bin_dt) /
                            static_cast<double>(plan.inner_averages);
    IQTrace record;
    record.dt = bin_dt;
    record.t0 = t_start;
    record.samples.resize(plan.outer_averages * n_bins);
    for (std::size_t b = 0; b < plan.outer_averages; ++b) {
        std::complex<double> block_phase{1.0, 0.0};
        if (noise.drift_rate != 0.0) {
            std::complex<double> acc{0.0, 0.0};
            for (std::size_t c = 0; c < plan.inner_averages; ++c) {
                const double wall =
                    static_cast<double>(b * plan.inner_averages + c) * cycle_period;
                acc += std::polar(1.0, noise.drift_rate * wall);
            }
            block_phase = acc / static_cast<double>(plan.inner_averages);
        }
        for (std::size_t i = 0; i < n_bins; ++i) {
            const double t = t_start + (static_cast<double>(i) + 0.5) * bin_dt;
            std::complex<double> s = bin_signal(t) * block_phase;
            if (noise.n_noise > 0.0)
                s += sampler.complex_normal(variance);
            record.samples[b * n_bins + i] = s;
        }
    }
    return record;
}

/// Plan describing a block record to the estimators: the inner averaging has
/// already happened at synthesis time.
inline AveragingPlan block_estimator_plan(const AveragingPlan& plan) {
    return {1, plan.outer_averages, plan.boxcar_len};
}

/// Moving average over floor(window/dt) samples; output has n - W + 1 samples
/// and t0 shifted to the window centers.
inline IQTrace boxcar_filter(const IQTrace& trace, double window) {
    if (!(trace.dt > 0.0) || window < trace.dt)
        throw std::invalid_argument("boxcar_filter: window must be >= dt");
    if (window > trace.duration())
        throw std::invalid_argument("boxcar_filter: window exceeds trace duration");
    const auto w = detail::samples_in(window, trace.dt);
    IQTrace out;
    out.dt = trace.dt;
    out.t0 = trace.t0 + 0.5 * static_cast<double>(w - 1) * trace.dt;
    out.samples.resize(trace.samples.size() - w + 1);
    for (std::size_t i = 0; i + w <= trace.samples.size(); ++i) {
        std::complex<double> acc{0.0, 0.0};
        for (std::size_t j = 0; j < w; ++j)
            acc += trace.samples[i + j];
        out.samples[i] = acc / static_cast<double>(w);
    }
    return out;
}

/// Keep every stride-th sample starting at samples[0].
inline IQTrace decimate(const IQTrace& trace, std::size_t stride) {
    if (stride < 1)
        throw std::invalid_argument("decimate: stride must be >= 1");
    IQTrace out;
    out.dt = trace.dt * static_cast<double>(stride);
    out.t0 = trace.t0;
    out.samples.reserve((trace.samples.size() + stride - 1) / stride);
    for (std::size_t i = 0; i < trace.samples.size(); i += stride)
        out.samples.push_back(trace.samples[i]);
    return out;
}

/// Non-overlapping window means (decimating boxcar); trailing partial window
/// is dropped.
inline IQTrace bin_average(const IQTrace& trace, double window) {
    if (!(trace.dt > 0.0) || window < trace.dt)
        throw std::invalid_argument("bin_average: window must be >= dt");
    const auto w = detail::samples_in(window, trace.dt);
    const std::size_t n_out = trace.samples.size() / w;
    if (n_out == 0)
        throw std::invalid_argument("bin_average: window exceeds trace duration");
    IQTrace out;
    out.dt = trace.dt * static_cast<double>(w);
    out.t0 = trace.t0 + 0.5 * static_cast<double>(w - 1) * trace.dt;
    out.samples.resize(n_out);
    for (std::size_t i = 0; i < n_out; ++i) {
        std::complex<double> acc{0.0, 0.0};
        for (std::size_t j = 0; j < w; ++j)
            acc += trace.samples[i * w + j];
        out.samples[i] = acc / static_cast<double>(w);
    }
    return out;
}

/// Optional unit conversion: mean-square amplitude in voltage units to
/// electrical power on a matched line, P = <A^2> / (2 Z). All estimators work
/// in flux units where this never enters; it exists for chains calibrated
/// against a power meter.
inline double power_from_mean_square(double mean_square_voltage, double impedance_ohm = 50.0) {
    if (!(impedance_ohm > 0.0))
        throw std::invalid_argument("power_from_mean_square: impedance must be > 0");
    return mean_square_voltage / (2.0 * impedance_ohm);
}

/// n_noise = PSD / (G hbar omega).
inline double effective_noise_photons(double psd, double gain, double omega) {
    if (!(gain > 0.0))
        throw std::invalid_argument("effective_noise_photons: gain must be > 0");
    if (!(omega > 0.0))
        throw std::invalid_argument("effective_noise_photons: omega must be > 0");
    return psd / (gain * hbar * omega);
}

/// Single-shot power SNR = n_c * kappa_out * tau / n_noise (kappa_out angular).
inline double snr(double n_c, double kappa_out, double tau, double n_noise) {
    if (!(n_noise > 0.0))
        throw std::domain_error("snr: n_noise must be > 0");
    return n_c * kappa_out * tau / n_noise;
}

/// Per-time-bin estimate with block-scatter standard errors.
struct BinSeries {
    std::vector<double> value;
    std::vector<double> std_error;
    double dt = 0.0;
    double t0 = 0.0;
    bool low_signal = false; // amplitude estimator clamped a negative power
};

namespace detail {

inline std::vector<std::vector<std::complex<double>>>
inner_averaged_blocks(const IQTrace& record, const AveragingPlan& plan, const char* who) {
    plan.validate();
    const std::size_t k = plan.cycles();
    if (record.samples.empty() || record.samples.size() % k != 0)
        throw std::invalid_argument(std::string(who) +
                                    ": record length must be a nonzero multiple of inner*outer");
    const std::size_t len = record.samples.size() / k;
    std::vector<std::vector<std::complex<double>>> blocks(
        plan.outer_averages, std::vector<std::complex<double>>(len, {0.0, 0.0}));
    for (std::size_t b = 0; b < plan.outer_averages; ++b) {
        auto& block = blocks[b];
        for (std::size_t c = 0; c < plan.inner_averages; ++c) {
            const std::size_t base = (b * plan.inner_averages + c) * len;
            for (std::size_t t = 0; t < len; ++t)
                block[t] += record.samples[base + t];
        }
        for (auto& v : block)
            v /= static_cast<double>(plan.inner_averages);
    }
    return blocks;
}

inline void require_aligned(const IQTrace& signal, const IQTrace& reference, const char* who) {
    if (!(signal.dt > 0.0) || std::abs(signal.dt - reference.dt) > 1e-9 * signal.dt)
        throw std::invalid_argument(std::string(who) + ": traces must share the sampling interval");
}

/// Amplitude from a noise-subtracted power with a delta-method error. The
/// square root preserves the sign of the power: a hard clamp at zero would
/// bias the null case by +0.4 sqrt(se) per bin, which does not average away
/// and breaks probe-off consistency checks. A negative power still raises the
/// low-signal flag. Near zero the linearized error is replaced by the sqrt
/// scale of the power error itself (conservative at null).
inline std::pair<double, double> amplitude_from_power(double power, double power_se,
                                                      bool* low_signal) {
    if (power < 0.0 && low_signal)
        *low_signal = true;
    const double a = std::copysign(std::sqrt(std::abs(power)), power);
    double se = 0.0;
    if (power_se > 0.0)
        se = power_se / (2.0 * std::max(std::abs(a), 0.5 * std::sqrt(power_se)));
    return {a, se};
}

/// Mean and standard error of |block|^2 pooled over all (block, bin) entries.
inline std::pair<double, double>
pooled_power(const std::vector<std::vector<std::complex<double>>>& blocks) {
    double mean = 0.0, m2 = 0.0;
    std::size_t n = 0;
    for (const auto& block : blocks)
        for (const auto& v : block) {
            const double p = std::norm(v);
            ++n;
            const double d = p - mean;
            mean += d / static_cast<double>(n);
            m2 += d * (p - mean);
        }
    const double var = (n > 1) ? m2 / static_cast<double>(n - 1) : 0.0;
    return {mean, std::sqrt(var / static_cast<double>(n))};
}

} // namespace detail

/// Phase change per time bin: arg of the block-averaged Hermitian product of
/// the inner-averaged signal trace with the inner-averaged reference (reduced
/// to one complex amplitude per block), minus the configured artificial
/// offset. Cross terms between signal and noise average away over the outer
/// blocks; a common per-cycle drift phase cancels in the product exactly.
inline BinSeries phase_change_estimator(const IQTrace& signal, const IQTrace& reference,
                                        const AveragingPlan& plan, double phase_offset) {
    detail::require_aligned(signal, reference, "phase_change_estimator");
    const auto sig = detail::inner_averaged_blocks(signal, plan, "phase_change_estimator");
    const auto ref = detail::inner_averaged_blocks(reference, plan, "phase_change_estimator");
    const std::size_t b_count = plan.outer_averages;
    const std::size_t n_bins = sig.front().size();
    const std::size_t m_ref = ref.front().size();

    std::vector<std::complex<double>> rho(b_count);
    for (std::size_t b = 0; b < b_count; ++b) {
        std::complex<double> acc{0.0, 0.0};
        for (std::size_t u = 0; u < m_ref; ++u)
            acc += ref[b][u];
        rho[b] = acc / static_cast<double>(m_ref);
    }

    BinSeries out;
    out.dt = signal.dt;
    out.t0 = signal.t0;
    out.value.resize(n_bins);
    out.std_error.resize(n_bins);
    std::vector<std::complex<double>> z(b_count);
    for (std::size_t t = 0; t < n_bins; ++t) {
        std::complex<double> mean{0.0, 0.0};
        for (std::size_t b = 0; b < b_count; ++b) {
            z[b] = sig[b][t] * std::conj(rho[b]);
            mean += z[b];
        }
        mean /= static_cast<double>(b_count);
        const double mag = std::abs(mean);
        if (mag == 0.0)
            throw std::domain_error("phase_change_estimator: zero reference amplitude, phase undefined");
        out.value[t] = std::arg(mean) - phase_offset;
        double se = 0.0;
        if (b_count >= 2) {
            const std::complex<double> e = mean / mag;
            double ss = 0.0;
            for (std::size_t b = 0; b < b_count; ++b) {
                const double perp = std::imag(z[b] * std::conj(e));
                ss += perp * perp;
            }
            const double sd = std::sqrt(ss / static_cast<double>(b_count - 1));
            se = sd / (std::sqrt(static_cast<double>(b_count)) * mag);
        }
        out.std_error[t] = se;
    }
    return out;
}

/// Amplitude change per time bin: the averaged noise power (from a probe-off
/// calibration at the same plan) is subtracted from <|A|^2> and <|A0|^2>, the
/// square roots give the signal amplitudes, and the difference is normalized
/// by norm_amplitude (0 = use the reference's own amplitude, which equals the
/// on-resonance normalization when the reference is taken at delta_p = 0).
inline BinSeries amplitude_change_estimator(const IQTrace& signal, const IQTrace& reference,
                                            const AveragingPlan& plan, double noise_power,
                                            double norm_amplitude = 0.0) {
    detail::require_aligned(signal, reference, "amplitude_change_estimator");
    const auto sig = detail::inner_averaged_blocks(signal, plan, "amplitude_change_estimator");
    const auto ref = detail::inner_averaged_blocks(reference, plan, "amplitude_change_estimator");
    const std::size_t b_count = plan.outer_averages;
    const std::size_t n_bins = sig.front().size();

    bool clamped = false;

    const auto [ref_power, ref_power_se] = detail::pooled_power(ref);
    const auto [ref_amp, ref_amp_se] =
        detail::amplitude_from_power(ref_power - noise_power, ref_power_se, &clamped);

    const double norm = (norm_amplitude > 0.0) ? norm_amplitude : ref_amp;
    if (!(norm > 0.0))
        throw std::domain_error("amplitude_change_estimator: zero normalization amplitude");

    BinSeries out;
    out.dt = signal.dt;
    out.t0 = signal.t0;
    out.value.resize(n_bins);
    out.std_error.resize(n_bins);
    for (std::size_t t = 0; t < n_bins; ++t) {
        double mean = 0.0, m2 = 0.0;
        for (std::size_t b = 0; b < b_count; ++b) {
            const double p = std::norm(sig[b][t]);
            const double d = p - mean;
            mean += d / static_cast<double>(b + 1);
            m2 += d * (p - mean);
        }
        const double var = (b_count > 1) ? m2 / static_cast<double>(b_count - 1) : 0.0;
        const double se_power = std::sqrt(var / static_cast<double>(b_count));
        const auto [amp, amp_se] =
            detail::amplitude_from_power(mean - noise_power, se_power, &clamped);
        out.value[t] = (amp - ref_amp) / norm;
        out.std_error[t] = std::sqrt(amp_se * amp_se + ref_amp_se * ref_amp_se) / norm;
    }
    out.low_signal = clamped;
    return out;
}

struct ScalarEstimate {
    double value = 0.0;
    double std_error = 0.0;
    bool low_signal = false;
};

/// Single windowed amplitude-change estimate, computed in the power domain:
/// the signal and reference powers are pooled over all blocks and bins before
/// the square root. This is the correct reduction near zero signal, where
/// averaging per-bin amplitudes cannot beat down the reference uncertainty
/// (it is common to every bin).
inline ScalarEstimate windowed_amplitude_change(const IQTrace& signal, const IQTrace& reference,
                                                const AveragingPlan& plan, double noise_power,
                                                double norm_amplitude = 0.0) {
    detail::require_aligned(signal, reference, "windowed_amplitude_change");
    const auto sig = detail::inner_averaged_blocks(signal, plan, "windowed_amplitude_change");
    const auto ref = detail::inner_averaged_blocks(reference, plan, "windowed_amplitude_change");
    const auto [ps, ps_se] = detail::pooled_power(sig);
    const auto [pr, pr_se] = detail::pooled_power(ref);

    ScalarEstimate out;
    const auto [a_sig, a_sig_se] =
        detail::amplitude_from_power(ps - noise_power, ps_se, &out.low_signal);
    const auto [a_ref, a_ref_se] =
        detail::amplitude_from_power(pr - noise_power, pr_se, &out.low_signal);
    const double norm = (norm_amplitude > 0.0) ? norm_amplitude : a_ref;
    if (!(norm > 0.0))
        throw std::domain_error("windowed_amplitude_change: zero normalization amplitude");
    out.value = (a_sig - a_ref) / norm;
    out.std_error = std::sqrt(a_sig_se * a_sig_se + a_ref_se * a_ref_se) / norm;
    return out;
}

/// Noise-subtracted mean amplitude of a record (e.g. the on-resonance
/// reference used to normalize amplitude changes across a probe sweep).
inline double estimate_mean_amplitude(const IQTrace& record, const AveragingPlan& plan,
                                      double noise_power) {
    const auto blocks = detail::inner_averaged_blocks(record, plan, "estimate_mean_amplitude");
    double acc = 0.0;
    std::size_t n = 0;
    for (const auto& block : blocks)
        for (const auto& v : block) {
            acc += std::norm(v);
            ++n;
        }
    const double power = acc / static_cast<double>(n) - noise_power;
    return std::sqrt(std::max(power, 0.0));
}

/// Mean of |inner-averaged noise|^2 over blocks and bins, from a record with
/// the probe switched off. Feeds amplitude_change_estimator's subtraction.
inline double calibrate_noise_power(const IQTrace& probe_off, const AveragingPlan& plan) {
    const auto blocks = detail::inner_averaged_blocks(probe_off, plan, "calibrate_noise_power");
    double acc = 0.0;
    std::size_t n = 0;
    for (const auto& block : blocks)
        for (const auto& v : block) {
            acc += std::norm(v);
            ++n;
        }
    return acc / static_cast<double>(n);
}

} // namespace rydsim
