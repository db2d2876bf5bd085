#include "dyntun/quantum_engine.hpp"

#include "dyntun/errors.hpp"
#include "dyntun/parallel.hpp"
#include "dyntun/rng.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <mutex>
#include <numeric>
#include <stdexcept>

namespace dyntun {

namespace {

// The FFTW planner is not re-entrant.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

std::size_t next_pow2(std::size_t n) { return std::bit_ceil(std::max<std::size_t>(n, 2)); }

double positive_frac(double x) {
    double f = x - std::floor(x);
    if (f >= 1.0) f = 0.0;
    return f;
}

}  // namespace

// ---------------------------------------------------------------- parameters

void QuantumParams::validate() const {
    if (!(k >= 0.0) || !std::isfinite(k)) throw ConfigError("quantum.k must be finite and >= 0");
    if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("quantum.tau must be positive");
    if (!std::isfinite(eta)) throw ConfigError("quantum.eta must be finite");
    if (n_max < n_min) throw ConfigError("quantum.n_max must be >= n_min");
    if (n_max - n_min + 1 < 8) throw ConfigError("momentum basis must hold at least 8 states");
}

void EnsembleSpec::validate() const {
    if (count < 1) throw ConfigError("ensemble.count must be >= 1");
    if (!(beta_fwhm > 0.0 && beta_fwhm < 1.0)) throw ConfigError("ensemble.beta_fwhm must lie in (0, 1)");
    if (!(beta_center >= 0.0 && beta_center < 1.0)) throw ConfigError("ensemble.beta_center must lie in [0, 1)");
}

double SEModel::probability(double k) const {
    switch (mode) {
    case SEMode::off: return 0.0;
    case SEMode::fixed: return p_per_kick;
    case SEMode::formula: return se_probability_from_formula(k, detuning, lifetime);
    }
    return 0.0;
}

SEModel SEModel::resolved(double k) const {
    SEModel out = *this;
    out.p_per_kick = probability(k);
    return out;
}

void SEModel::validate() const {
    if (mode == SEMode::fixed && !(p_per_kick >= 0.0 && p_per_kick < 1.0))
        throw ConfigError("se.p_per_kick must lie in [0, 1)");
    if (mode == SEMode::formula && !(detuning > 0.0 && lifetime > 0.0))
        throw ConfigError("se formula mode needs positive detuning and lifetime");
}

std::string to_string(SEMode m) {
    switch (m) {
    case SEMode::off: return "off";
    case SEMode::fixed: return "fixed";
    case SEMode::formula: return "formula";
    }
    return "?";
}

std::string to_string(RecoilModel m) { return m == RecoilModel::uniform ? "uniform" : "dipole"; }

double se_probability_from_formula(double k, double detuning, double lifetime) {
    if (!(detuning > 0.0) || !(lifetime > 0.0)) throw std::domain_error("detuning and lifetime must be positive");
    if (k < 0.0) throw std::domain_error("kick strength must be non-negative");
    return k / (lifetime * detuning);
}

// --------------------------------------------------------------------- basis

Basis Basis::fixed(std::int64_t n_min, std::int64_t n_max) {
    if (n_max < n_min) throw ConfigError("basis: n_max < n_min");
    Basis b;
    b.size_ = next_pow2(static_cast<std::size_t>(n_max - n_min + 1));
    b.n_min_ = n_min;
    return b;
}

Basis Basis::comoving(std::size_t size, std::size_t lead, std::size_t absorber, double center0, double velocity) {
    if (!std::has_single_bit(size) || size < 64) throw ConfigError("co-moving basis size must be a power of two >= 64");
    if (lead + absorber + 16 > size) throw ConfigError("co-moving basis: lead + absorber leave no room");
    Basis b;
    b.size_ = size;
    b.comoving_ = true;
    b.lead_ = lead;
    b.absorber_ = absorber;
    b.center0_ = center0;
    b.velocity_ = velocity;
    return b;
}

std::int64_t Basis::n_first(std::int64_t kick) const {
    if (!comoving_) return n_min_;
    const auto c = static_cast<std::int64_t>(std::llround(center0_ + velocity_ * static_cast<double>(kick)));
    const auto size = static_cast<std::int64_t>(size_);
    const auto lead = static_cast<std::int64_t>(lead_);
    return moves_up() ? c + lead - size : c - lead;
}

// --------------------------------------------------------------------- state

RotorState RotorState::plane_wave(double beta, std::int64_t n, const Basis& basis) {
    RotorState s;
    s.beta = beta;
    s.n_first = basis.n_first(0);
    s.amplitudes.assign(basis.size(), Complex{0.0, 0.0});
    if (n < s.n_first || n > s.n_last()) throw ConfigError("initial momentum lies outside the basis");
    s.amplitudes[static_cast<std::size_t>(n - s.n_first)] = 1.0;
    return s;
}

Complex RotorState::amplitude(std::int64_t n) const {
    if (n < n_first || n > n_last()) return {0.0, 0.0};
    return amplitudes[static_cast<std::size_t>(n - n_first)];
}

double RotorState::norm() const {
    double s = 0.0;
    for (const auto& c : amplitudes) s += std::norm(c);
    return s;
}

double RotorState::mean_n() const {
    double s = 0.0;
    for (std::size_t i = 0; i < amplitudes.size(); ++i)
        s += static_cast<double>(n_first + static_cast<std::int64_t>(i)) * std::norm(amplitudes[i]);
    return s;
}

double RotorState::mean_n2() const {
    double s = 0.0;
    for (std::size_t i = 0; i < amplitudes.size(); ++i) {
        const double n = static_cast<double>(n_first + static_cast<std::int64_t>(i));
        s += n * n * std::norm(amplitudes[i]);
    }
    return s;
}

double MomentumHistogram::at(std::int64_t n) const {
    if (n < n_first || n > n_last()) return 0.0;
    return prob[static_cast<std::size_t>(n - n_first)];
}

double MomentumHistogram::total() const { return std::accumulate(prob.begin(), prob.end(), 0.0); }

// ---------------------------------------------------------------- transforms

AlignedBuffer::AlignedBuffer(std::size_t size)
    : data_(reinterpret_cast<Complex*>(fftw_alloc_complex(size))), size_(size) {
    if (!data_) throw std::bad_alloc();
    std::fill(data_, data_ + size_, Complex{0.0, 0.0});
}

AlignedBuffer::~AlignedBuffer() {
    if (data_) fftw_free(data_);
}

KickOperator::KickOperator(double k, std::size_t size) : size_(size), kick_(size) {
    if (size < 2) throw std::invalid_argument("KickOperator: size must be >= 2");
    const double inv = 1.0 / static_cast<double>(size);
    for (std::size_t m = 0; m < size; ++m) {
        const double theta = kTwoPi * static_cast<double>(m) * inv;
        kick_[m] = std::polar(inv, -k * std::cos(theta));
    }
    AlignedBuffer probe(size);
    auto* p = reinterpret_cast<fftw_complex*>(probe.data());
    const int n = static_cast<int>(size);
    // FFTW_ESTIMATE picks the same algorithm on every call, which keeps the
    // rounding (and therefore every artifact) reproducible.
    std::lock_guard lock(planner_mutex());
    forward_ = fftw_plan_dft_1d(n, p, p, FFTW_FORWARD, FFTW_ESTIMATE);
    backward_ = fftw_plan_dft_1d(n, p, p, FFTW_BACKWARD, FFTW_ESTIMATE);
    if (!forward_ || !backward_) throw std::runtime_error("FFTW planning failed");
}

KickOperator::~KickOperator() {
    std::lock_guard lock(planner_mutex());
    if (forward_) fftw_destroy_plan(static_cast<fftw_plan>(forward_));
    if (backward_) fftw_destroy_plan(static_cast<fftw_plan>(backward_));
}

void KickOperator::apply(Complex* buffer) const {
    auto* p = reinterpret_cast<fftw_complex*>(buffer);
    // momentum -> angle: psi(theta_m) = sum_i c_i exp(+i i theta_m)
    fftw_execute_dft(static_cast<fftw_plan>(backward_), p, p);
    for (std::size_t m = 0; m < size_; ++m) buffer[m] *= kick_[m];
    fftw_execute_dft(static_cast<fftw_plan>(forward_), p, p);
}

// ---------------------------------------------------------------- free phase

double free_propagation_phase(std::int64_t n, double beta, std::int64_t j, const QuantumParams& q) {
    const double x = static_cast<double>(n) + beta + q.eta * (static_cast<double>(j) + 0.5);
    return 0.5 * q.tau * x * x;
}

namespace {

// phi reduced mod 2pi at momentum m + f, m integer, 0 <= f < 1, using
// (tau/2)(m+f)^2 = pi m^2 + (eps/2) m^2 + tau m f + (tau/2) f^2.
double reduced_phase(std::int64_t m, double f, const QuantumParams& q) {
    const double eps = q.eps();
    const double md = static_cast<double>(m);
    double phi = (m & 1) ? std::numbers::pi : 0.0;
    phi += std::fmod(0.5 * eps * md * md, kTwoPi);
    phi += std::fmod(q.tau * md * f, kTwoPi);
    phi += 0.5 * q.tau * f * f;
    return phi;
}

constexpr std::size_t kPhaseBlock = 32;

}  // namespace

void apply_free_phase(std::span<Complex> amplitudes, std::int64_t n_first, double beta, std::int64_t j,
                      const QuantumParams& q) {
    const double shift = beta + q.eta * (static_cast<double>(j) + 0.5);
    const double floor_shift = std::floor(shift);
    const auto base = static_cast<std::int64_t>(floor_shift);
    const double f = shift - floor_shift;
    const Complex step = std::polar(1.0, -q.tau);
    // exp(-i phi) over a block by the recurrence
    //   phi(n+1) - phi(n) = tau (n + shift + 1/2),
    // reseeded exactly at the start of every block.
    for (std::size_t start = 0; start < amplitudes.size(); start += kPhaseBlock) {
        const std::int64_t m = n_first + static_cast<std::int64_t>(start) + base;
        Complex z = std::polar(1.0, -reduced_phase(m, f, q));
        const double dphi =
            std::fmod(kTwoPi * f + q.eps() * (static_cast<double>(m) + f), kTwoPi) + 0.5 * q.tau;
        Complex ratio = std::polar(1.0, -dphi);
        const std::size_t end = std::min(amplitudes.size(), start + kPhaseBlock);
        for (std::size_t i = start; i < end; ++i) {
            amplitudes[i] *= z;
            z *= ratio;
            ratio *= step;
        }
    }
}

// ------------------------------------------------------------ single rotor

RotorState apply_kick(const RotorState& state, double k) {
    RotorState out = state;
    if (k == 0.0) return out;
    const std::size_t size = state.amplitudes.size();
    KickOperator kick(k, size);
    AlignedBuffer buf(size);
    std::copy(state.amplitudes.begin(), state.amplitudes.end(), buf.data());
    kick.apply(buf.data());
    std::copy(buf.data(), buf.data() + size, out.amplitudes.begin());
    const double edge = std::max(std::abs(out.amplitudes.front()), std::abs(out.amplitudes.back()));
    if (edge >= 1e-12) throw BasisOverflow("kick pushed probability onto the basis edge", -1, state.kick_index);
    return out;
}

RotorState evolve_one_period(const RotorState& state, const QuantumParams& q) {
    RotorState out = state;
    apply_free_phase(out.amplitudes, out.n_first, out.beta, out.kick_index, q);
    out = apply_kick(out, q.k);
    out.kick_index += 1;
    return out;
}

namespace {

// Shift amplitudes so that index i moves to i + carry (circular; the wrapped
// edge is empty whenever the basis is adequate).
void shift_amplitudes(std::span<Complex> a, std::int64_t carry) {
    if (carry == 0 || a.empty()) return;
    const auto n = static_cast<std::int64_t>(a.size());
    const auto r = ((carry % n) + n) % n;
    std::rotate(a.begin(), a.begin() + (n - r), a.end());
}

}  // namespace

RotorState apply_spontaneous_emission(const RotorState& state, double recoil) {
    RotorState out = state;
    const double total = state.beta + recoil;
    const double carry_d = std::floor(total);
    out.beta = positive_frac(total);
    shift_amplitudes(out.amplitudes, static_cast<std::int64_t>(carry_d));
    return out;
}

double draw_recoil(RecoilModel model, std::uint64_t seed, std::uint64_t rotor, std::uint64_t kick) {
    using rng::Stream;
    if (model == RecoilModel::uniform) return 2.0 * rng::uniform(seed, Stream::se_recoil, rotor, kick) - 1.0;
    // density 3/8 (1 + u^2) on [-1, 1], by rejection against 3/4
    for (std::uint64_t slot = 0;; slot += 2) {
        const double u = 2.0 * rng::uniform(seed, Stream::se_recoil, rotor, kick, slot) - 1.0;
        const double v = rng::uniform(seed, Stream::se_recoil, rotor, kick, slot + 1);
        if (2.0 * v <= 1.0 + u * u) return u;
    }
}

std::int64_t kick_spread(double k) {
    // |J_m(k)| <= (k/2)^m / m!
    const double half = 0.5 * std::abs(k);
    double bound = 1.0;
    std::int64_t m = 0;
    while (m < 10'000) {
        ++m;
        bound *= half / static_cast<double>(m);
        if (bound < 1e-14 && static_cast<double>(m) > half) break;
    }
    return m;
}

std::pair<std::int64_t, std::int64_t> suggest_fixed_basis(const QuantumParams& q, std::int64_t initial_n,
                                                          std::int64_t kicks, double velocity) {
    const double diffusive = 12.0 * q.k * std::sqrt(0.5 * static_cast<double>(kicks) + 1.0);
    const auto margin = static_cast<std::int64_t>(std::ceil(diffusive)) + 2 * kick_spread(q.k) + 8;
    const auto drift = static_cast<std::int64_t>(std::ceil(std::abs(velocity) * static_cast<double>(kicks)));
    std::int64_t lo = initial_n - margin;
    std::int64_t hi = initial_n + margin;
    if (velocity >= 0.0) hi += drift;
    else lo -= drift;
    return {lo, hi};
}

// ------------------------------------------------------------------ ensemble

std::vector<RotorState> sample_beta_ensemble(const EnsembleSpec& spec, const Basis& basis) {
    spec.validate();
    const double sigma = spec.beta_fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
    std::vector<RotorState> out;
    out.reserve(spec.count);
    for (std::size_t r = 0; r < spec.count; ++r) {
        const double z = rng::standard_normal(spec.seed, rng::Stream::beta, r, 0);
        out.push_back(RotorState::plane_wave(positive_frac(spec.beta_center + sigma * z), spec.initial_n, basis));
    }
    return out;
}

namespace {

struct RotorStepper {
    const QuantumParams& q;
    const Basis& basis;
    const KickOperator& kick;
    const SEModel& se;
    double p_se;
    std::uint64_t seed;
    double edge_tolerance;

    void check_edges(const Complex* a, std::size_t size, bool check_low, bool check_high, std::size_t rotor,
                     std::int64_t kick_index) const {
        const std::size_t band = std::min<std::size_t>(4, size / 8);
        double edge = 0.0;
        for (std::size_t i = 0; i < band; ++i) {
            if (check_low) edge = std::max(edge, std::abs(a[i]));
            if (check_high) edge = std::max(edge, std::abs(a[size - 1 - i]));
        }
        if (!(edge < edge_tolerance)) {
            throw BasisOverflow("rotor " + std::to_string(rotor) + " reached the basis edge at kick " +
                                    std::to_string(kick_index) + " (|c| = " + std::to_string(edge) + ")",
                                static_cast<std::int64_t>(rotor), kick_index);
        }
    }

    // Moves the window to the basis position for `kick` and empties the
    // absorbing layer, adding what was removed to `absorbed`.
    void follow(Complex* a, std::size_t size, std::int64_t& n_first, std::int64_t kick_index,
                double& absorbed) const {
        const std::int64_t target = basis.n_first(kick_index);
        const std::int64_t d = target - n_first;
        const auto n = static_cast<std::int64_t>(size);
        double lost = 0.0;
        if (d > 0) {
            const auto dd = std::min(d, n);
            for (std::int64_t i = 0; i < dd; ++i) lost += std::norm(a[i]);
            std::move(a + dd, a + n, a);
            std::fill(a + (n - dd), a + n, Complex{0.0, 0.0});
        } else if (d < 0) {
            const auto dd = std::min(-d, n);
            for (std::int64_t i = n - dd; i < n; ++i) lost += std::norm(a[i]);
            std::move_backward(a, a + (n - dd), a + n);
            std::fill(a, a + dd, Complex{0.0, 0.0});
        }
        n_first = target;
        const std::size_t layer = basis.absorber();
        if (basis.moves_up()) {
            for (std::size_t i = 0; i < layer; ++i) {
                lost += std::norm(a[i]);
                a[i] = 0.0;
            }
        } else {
            for (std::size_t i = size - layer; i < size; ++i) {
                lost += std::norm(a[i]);
                a[i] = 0.0;
            }
        }
        absorbed += lost;
    }

    void run(RotorState& s, std::size_t rotor, std::int64_t kicks, AlignedBuffer& buf) const {
        const std::size_t size = s.amplitudes.size();
        Complex* a = buf.data();
        std::copy(s.amplitudes.begin(), s.amplitudes.end(), a);
        std::span<Complex> view(a, size);
        for (std::int64_t t = 0; t < kicks; ++t) {
            const std::int64_t j = s.kick_index;
            apply_free_phase(view, s.n_first, s.beta, j, q);
            kick.apply(a);
            s.kick_index = j + 1;
            if (basis.is_comoving()) {
                follow(a, size, s.n_first, s.kick_index, s.absorbed);
                check_edges(a, size, !basis.moves_up(), basis.moves_up(), rotor, s.kick_index);
            } else {
                check_edges(a, size, true, true, rotor, s.kick_index);
            }
            if (p_se > 0.0 &&
                rng::uniform(seed, rng::Stream::se_event, rotor, static_cast<std::uint64_t>(j)) < p_se) {
                const double recoil = draw_recoil(se.recoil, seed, rotor, static_cast<std::uint64_t>(j));
                const double total = s.beta + recoil;
                const double carry = std::floor(total);
                s.beta = positive_frac(total);
                shift_amplitudes(view, static_cast<std::int64_t>(carry));
            }
        }
        std::copy(a, a + size, s.amplitudes.begin());
    }
};

}  // namespace

std::vector<MomentumHistogram> evolve_ensemble(std::vector<RotorState>& states, const QuantumParams& q,
                                               const Basis& basis, const SEModel& se, const EvolveOptions& opts) {
    q.validate();
    se.validate();
    if (states.empty()) throw ConfigError("evolve_ensemble: empty ensemble");
    if (opts.kicks < 0 || opts.stride < 1) throw ConfigError("evolve_ensemble: need kicks >= 0 and stride >= 1");
    const std::size_t size = basis.size();
    const std::int64_t j0 = states.front().kick_index;
    for (const auto& s : states) {
        if (s.amplitudes.size() != size) throw ConfigError("rotor state does not match the basis size");
        if (s.kick_index != j0) throw ConfigError("all rotors must share the kick index");
        if (s.n_first != states.front().n_first) throw ConfigError("all rotors must share the basis offset");
    }

    KickOperator kick(q.k, size);
    const double p_se = se.enabled() ? se.probability(q.k) : 0.0;
    const RotorStepper stepper{q, basis, kick, se, p_se, opts.seed, opts.edge_tolerance};

    const std::size_t count = states.size();
    std::vector<MomentumHistogram> series;
    auto snapshot = [&] {
        MomentumHistogram h;
        h.kick_index = states.front().kick_index;
        h.n_first = states.front().n_first;
        h.prob.assign(size, 0.0);
        h.eta = q.eta;
        double beta_sum = 0.0;
        // Fixed summation order: rotor index ascending.
        for (const auto& s : states) {
            for (std::size_t i = 0; i < size; ++i) h.prob[i] += std::norm(s.amplitudes[i]);
            h.absorbed += s.absorbed;
            beta_sum += s.beta;
        }
        const double inv = 1.0 / static_cast<double>(count);
        for (auto& p : h.prob) p *= inv;
        h.absorbed *= inv;
        h.beta_center = beta_sum * inv;
        series.push_back(std::move(h));
    };

    snapshot();
    std::int64_t done = 0;
    while (done < opts.kicks) {
        const std::int64_t chunk = std::min(opts.stride, opts.kicks - done);
        const int workers = std::max(1, opts.workers);
        std::vector<AlignedBuffer> scratch;
        // Contiguous rotor blocks, one per worker, each with its own scratch.
        const std::size_t blocks = std::min<std::size_t>(static_cast<std::size_t>(workers), count);
        for (std::size_t b = 0; b < blocks; ++b) scratch.emplace_back(size);
        parallel_for(blocks, workers, [&](std::size_t b) {
            const std::size_t lo = b * count / blocks;
            const std::size_t hi = (b + 1) * count / blocks;
            for (std::size_t r = lo; r < hi; ++r) stepper.run(states[r], r, chunk, scratch[b]);
        });
        done += chunk;
        snapshot();
    }
    return series;
}

}  // namespace dyntun
