#pragma once

// Floquet evolution of beta-rotors for the kicked accelerator, in the
// free-falling gauge where gravity only drifts the quasimomentum.

#include "dyntun/core_map.hpp"

#include <complex>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dyntun {

using Complex = std::complex<double>;

struct QuantumParams {
    double k = 0.0;
    double tau = kTwoPi;
    double eta = 0.0;
    std::int64_t n_min = -64;
    std::int64_t n_max = 63;

    double eps() const { return tau - kTwoPi; }
    double hbar_eff() const { return std::abs(eps()); }
    MapParams map_params() const { return MapParams::from_quantum(k, tau, eta); }
    void validate() const;
};

/// Momentum basis: either a fixed range of integer momenta or a window that
/// follows a drifting centre and absorbs what falls off its trailing edge.
class Basis {
public:
    static Basis fixed(std::int64_t n_min, std::int64_t n_max);
    static Basis fixed(const QuantumParams& q) { return fixed(q.n_min, q.n_max); }
    /// `lead` states ahead of the centre (in the direction of motion), an
    /// absorbing layer of `absorber` states at the trailing edge.
    static Basis comoving(std::size_t size, std::size_t lead, std::size_t absorber, double center0,
                          double velocity);

    std::size_t size() const { return size_; }
    bool is_comoving() const { return comoving_; }
    std::size_t absorber() const { return absorber_; }
    bool moves_up() const { return velocity_ >= 0.0; }
    /// Momentum of amplitude index 0 at a given kick.
    std::int64_t n_first(std::int64_t kick) const;

private:
    std::size_t size_ = 0;
    bool comoving_ = false;
    std::int64_t n_min_ = 0;
    std::size_t lead_ = 0;
    std::size_t absorber_ = 0;
    double center0_ = 0.0;
    double velocity_ = 0.0;
};

struct RotorState {
    double beta = 0.5;
    std::int64_t n_first = 0;  // momentum of amplitudes[0]
    std::vector<Complex> amplitudes;
    std::int64_t kick_index = 0;
    double absorbed = 0.0;  // probability removed by a co-moving basis

    static RotorState plane_wave(double beta, std::int64_t n, const Basis& basis);

    std::int64_t n_last() const { return n_first + static_cast<std::int64_t>(amplitudes.size()) - 1; }
    Complex amplitude(std::int64_t n) const;
    double norm() const;
    double mean_n() const;
    double mean_n2() const;
};

struct EnsembleSpec {
    std::size_t count = 1;
    double beta_center = 0.5;
    double beta_fwhm = 0.06;
    std::int64_t initial_n = 0;
    std::uint64_t seed = 1;

    void validate() const;
};

enum class SEMode { off, fixed, formula };
enum class RecoilModel { uniform, dipole };

struct SEModel {
    SEMode mode = SEMode::off;
    double p_per_kick = 0.0;
    double detuning = 0.0;  // angular frequency, formula mode
    double lifetime = 0.0;  // seconds, formula mode
    RecoilModel recoil = RecoilModel::uniform;

    bool enabled() const { return mode != SEMode::off; }
    /// Per-kick probability for kick strength k.
    double probability(double k) const;
    /// Fills p_per_kick from the formula when in formula mode.
    SEModel resolved(double k) const;
    void validate() const;
};

enum class Frame { falling, lab };

struct MomentumHistogram {
    std::int64_t kick_index = 0;
    std::int64_t n_first = 0;
    std::vector<double> prob;  // ensemble probability of n_first + i
    double absorbed = 0.0;
    double beta_center = 0.5;
    double eta = 0.0;
    Frame frame = Frame::falling;

    std::int64_t n_last() const { return n_first + static_cast<std::int64_t>(prob.size()) - 1; }
    double at(std::int64_t n) const;
    double total() const;
    /// Momentum offset between the falling and lab frames at this kick.
    double lab_shift() const { return eta * static_cast<double>(kick_index); }
};

/// Applies the kick exp(-i k cos theta) by transforming to an angle grid of
/// the basis size and back. Owns its FFTW plans; apply() is safe to call
/// concurrently on distinct buffers.
class KickOperator {
public:
    KickOperator(double k, std::size_t size);
    ~KickOperator();
    KickOperator(const KickOperator&) = delete;
    KickOperator& operator=(const KickOperator&) = delete;

    std::size_t size() const { return size_; }
    /// `buffer` must come from AlignedBuffer of the same size.
    void apply(Complex* buffer) const;

private:
    std::size_t size_;
    std::vector<Complex> kick_;  // includes the 1/size normalisation
    void* forward_ = nullptr;
    void* backward_ = nullptr;
};

/// SIMD-aligned scratch storage for the angle transforms.
class AlignedBuffer {
public:
    explicit AlignedBuffer(std::size_t size);
    ~AlignedBuffer();
    AlignedBuffer(const AlignedBuffer&) = delete;
    AlignedBuffer& operator=(const AlignedBuffer&) = delete;
    AlignedBuffer(AlignedBuffer&& o) noexcept : data_(o.data_), size_(o.size_) { o.data_ = nullptr; }

    Complex* data() { return data_; }
    std::span<Complex> span() { return {data_, size_}; }

private:
    Complex* data_;
    std::size_t size_;
};

/// phi_n(j) = (tau/2) (n + beta + eta (j + 1/2))^2, the free-flight phase
/// between kick j and kick j+1.
double free_propagation_phase(std::int64_t n, double beta, std::int64_t j, const QuantumParams& q);

/// Multiplies amplitudes by exp(-i phi_n(j)), dropping the n-independent part.
void apply_free_phase(std::span<Complex> amplitudes, std::int64_t n_first, double beta, std::int64_t j,
                      const QuantumParams& q);

RotorState apply_kick(const RotorState& state, double k);

/// Free flight for the current kick index, then the kick; increments the
/// kick index. Uses a fixed basis.
RotorState evolve_one_period(const RotorState& state, const QuantumParams& q);

/// Rigid momentum shift by `recoil`: beta <- frac(beta + recoil), amplitudes
/// move by the integer carry.
RotorState apply_spontaneous_emission(const RotorState& state, double recoil);

/// p_SE = k / (lifetime * detuning), detuning as an angular frequency.
double se_probability_from_formula(double k, double detuning, double lifetime);

std::vector<RotorState> sample_beta_ensemble(const EnsembleSpec& spec, const Basis& basis);

struct EvolveOptions {
    std::int64_t kicks = 0;
    std::int64_t stride = 1;
    int workers = 1;
    std::uint64_t seed = 1;
    double edge_tolerance = 1e-12;  // max |c_n| allowed on the basis edges
};

/// Evolves every rotor independently, applying the spontaneous-emission
/// channel once per kick with the model's probability, and returns the
/// ensemble histograms at kick 0, every stride, and the final kick.
/// Deterministic for a fixed seed whatever the worker count.
std::vector<MomentumHistogram> evolve_ensemble(std::vector<RotorState>& states, const QuantumParams& q,
                                               const Basis& basis, const SEModel& se,
                                               const EvolveOptions& opts);

/// Recoil draw for one event, from the keyed stream of (seed, rotor, kick).
double draw_recoil(RecoilModel model, std::uint64_t seed, std::uint64_t rotor, std::uint64_t kick);

/// Momentum spread of one kick at the 1e-12 amplitude level.
std::int64_t kick_spread(double k);

/// Fixed basis large enough for `kicks` periods of an ensemble started at
/// `initial_n`, with the accelerator mode drifting at `velocity` states/kick.
std::pair<std::int64_t, std::int64_t> suggest_fixed_basis(const QuantumParams& q, std::int64_t initial_n,
                                                          std::int64_t kicks, double velocity);

std::string to_string(SEMode m);
std::string to_string(RecoilModel m);

}  // namespace dyntun
