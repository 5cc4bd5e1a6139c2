#pragma once

#include "cousinsq/environment.hpp"
#include "cousinsq/mdp.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace cousinsq {

inline constexpr std::size_t kDefaultStateCap = 1'000'000;
inline constexpr std::size_t kDefaultDenseCap = 40'000'000;

/// Writable view of one matrix row (strided when the matrix is column-major).
using RowRef = Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;

/// Finite-state Markov channel; state 0 is the best by convention.
struct GilbertElliotChannel {
    Matrix transition;
    /// Per-state success probability, nonincreasing in the state index.
    std::vector<double> quality;

    std::size_t num_states() const noexcept { return quality.size(); }
    void validate() const;
    Vector stationary() const;
    std::size_t sample_next(std::size_t c, Rng& rng) const;

    /// Birth-death chain: stay with probability stay, otherwise move to a
    /// neighbour (split evenly when both exist). Quality is linear from
    /// q_best down to q_worst.
    static GilbertElliotChannel banded(std::size_t n, double stay, double q_best, double q_worst);
};

/// Mixed-radix codec, last digit fastest.
class MixedRadix {
public:
    MixedRadix() = default;
    explicit MixedRadix(std::vector<std::size_t> radices, std::size_t cap = SIZE_MAX);

    std::size_t size() const noexcept { return size_; }
    std::size_t digits() const noexcept { return radices_.size(); }
    const std::vector<std::size_t>& radices() const noexcept { return radices_; }
    const std::vector<std::size_t>& strides() const noexcept { return strides_; }

    std::vector<std::size_t> decode(std::size_t index) const;
    std::size_t encode(const std::vector<std::size_t>& digits) const;

private:
    std::vector<std::size_t> radices_;
    std::vector<std::size_t> strides_;
    std::size_t size_ = 1;
};

/**
 * Common base of the four wireless families. States and actions are
 * mixed-radix products of their components. Costs are the expected cost of
 * (s, a) over the step's randomness, composed as a weighted sum of named
 * components; sample() simulates the stochastic kernel directly, while
 * transition_row() enumerates it analytically.
 */
class WirelessModel : public Environment {
public:
    std::size_t num_states() const override { return states_.size(); }
    std::size_t num_actions() const override { return actions_.size(); }
    double gamma() const override { return gamma_; }

    virtual int model_id() const = 0;

    const MixedRadix& state_codec() const noexcept { return states_; }
    const MixedRadix& action_codec() const noexcept { return actions_; }
    std::vector<std::size_t> decode(std::size_t s) const { return states_.decode(s); }
    std::size_t encode(const std::vector<std::size_t>& digits) const { return states_.encode(digits); }

    /// Coordinates used by the aggregation distance (component values by default).
    virtual std::vector<double> features(std::size_t s) const;

    virtual std::vector<std::string> cost_names() const = 0;
    virtual std::vector<double> cost_components(std::size_t s, std::size_t a) const = 0;
    const std::vector<double>& cost_weights() const noexcept { return weights_; }
    double cost(std::size_t s, std::size_t a) const;

    /// Adds p(s' | s, a) into row (length |S|).
    virtual void transition_row(std::size_t s, std::size_t a, RowRef row) const = 0;

    /// Exact PTT and expected costs; throws SizeError above |S|^2 |A| > dense_cap.
    Mdp materialize(std::size_t dense_cap = kDefaultDenseCap) const;
    Matrix expected_costs() const;

protected:
    void set_spaces(std::vector<std::size_t> state_radices, std::vector<std::size_t> action_radices,
                    std::size_t state_cap);

    MixedRadix states_;
    MixedRadix actions_;
    double gamma_ = 0.9;
    std::vector<double> weights_;
};

struct Model1Config {
    std::size_t num_tx = 3;
    std::size_t buffer_size = 2;
    std::vector<double> arrival_prob{0.4};
    std::vector<GilbertElliotChannel> channels{GilbertElliotChannel::banded(3, 0.7, 0.9, 0.3)};
    /// num_tx x num_tx distances; empty means unit distance between every pair.
    Matrix tx_distance;
    double interference = 0.3;
    double drop_surcharge = 2.0;
    double buffer_w = 1.0;
    double channel_w = 1.0;
    double collision_w = 1.0;
    double gamma = 0.9;
    std::size_t state_cap = kDefaultStateCap;
};

/// Multi-transmitter single-receiver link with buffers; action is the set of
/// transmitting TXs as a bitmask (bit i = TX i).
class Model1 : public WirelessModel {
public:
    explicit Model1(Model1Config config);
    int model_id() const override { return 1; }
    std::vector<std::string> cost_names() const override;
    std::vector<double> cost_components(std::size_t s, std::size_t a) const override;
    void transition_row(std::size_t s, std::size_t a, RowRef row) const override;
    Sample sample(std::size_t s, std::size_t a, Rng& rng) const override;
    const Model1Config& config() const noexcept { return cfg_; }

private:
    double success_prob(std::size_t i, std::size_t channel, std::size_t mask) const;
    Model1Config cfg_;
};

struct Model2Config {
    std::size_t num_tx = 2;
    std::size_t num_relays = 1;
    std::size_t battery_size = 3;
    std::vector<double> harvest_prob{0.5};
    std::size_t direct_energy = 2;
    std::size_t relay_energy = 1;
    std::vector<GilbertElliotChannel> direct_channels{GilbertElliotChannel::banded(2, 0.8, 0.7, 0.2)};
    std::vector<GilbertElliotChannel> relay_channels{GilbertElliotChannel::banded(2, 0.8, 0.95, 0.5)};
    /// Per-relay packet corruption probability standing in for relay noise.
    std::vector<double> relay_corruption{0.1};
    double neg_throughput_w = 1.0;
    double drop_w = 1.0;
    double battery_w = 0.2;
    double gamma = 0.9;
    std::size_t state_cap = kDefaultStateCap;
};

/// Energy-harvesting transmitters choosing a direct link or one of the relays.
class Model2 : public WirelessModel {
public:
    explicit Model2(Model2Config config);
    int model_id() const override { return 2; }
    std::vector<std::string> cost_names() const override;
    std::vector<double> cost_components(std::size_t s, std::size_t a) const override;
    void transition_row(std::size_t s, std::size_t a, RowRef row) const override;
    Sample sample(std::size_t s, std::size_t a, Rng& rng) const override;
    const Model2Config& config() const noexcept { return cfg_; }

private:
    struct Outcome {
        std::vector<std::size_t> battery;
        double successes = 0.0;
        double dropped = 0.0;
        double energy = 0.0;
    };
    Outcome resolve(const std::vector<std::size_t>& digits, const std::vector<std::size_t>& choice,
                    std::uint64_t harvest_mask) const;
    Model2Config cfg_;
};

struct Model3Config {
    std::size_t num_tx = 2;
    std::size_t num_rx = 2;
    std::size_t buffer_size = 5;
    std::vector<double> arrival_prob{0.5};
    std::size_t max_send = 2;
    /// Channel parameters per distance class.
    std::vector<GilbertElliotChannel> channel_classes{
        GilbertElliotChannel::banded(2, 0.8, 0.9, 0.4),
        GilbertElliotChannel::banded(2, 0.8, 0.6, 0.2)};
    /// num_tx x num_rx class indices; empty means min(|i - r|, classes - 1).
    std::vector<std::vector<std::size_t>> distance_class;
    /// num_tx x num_tx distances; empty means unit distance.
    Matrix tx_distance;
    /// Success factor lost per extra packet at the same receiver.
    double rx_collision = 0.3;
    double drop_surcharge = 2.0;
    double buffer_w = 1.0;
    double channel_w = 1.0;
    double collision_w = 0.5;
    double rx_load_w = 0.5;
    double gamma = 0.9;
    std::size_t state_cap = kDefaultStateCap;
};

/// Multi-transmitter multi-receiver network; action is packets to send per TX,
/// each over a distinct receiver in order of channel quality.
class Model3 : public WirelessModel {
public:
    explicit Model3(Model3Config config);
    int model_id() const override { return 3; }
    std::vector<std::string> cost_names() const override;
    std::vector<double> cost_components(std::size_t s, std::size_t a) const override;
    void transition_row(std::size_t s, std::size_t a, RowRef row) const override;
    Sample sample(std::size_t s, std::size_t a, Rng& rng) const override;
    const Model3Config& config() const noexcept { return cfg_; }

    const GilbertElliotChannel& channel(std::size_t tx, std::size_t rx) const;

private:
    struct Plan {
        /// receivers[i] lists the receivers TX i uses, best first.
        std::vector<std::vector<std::size_t>> receivers;
        std::vector<std::size_t> load;
        /// success[i][k] is the success probability of TX i's k-th packet.
        std::vector<std::vector<double>> success;
    };
    Plan plan(const std::vector<std::size_t>& digits, const std::vector<std::size_t>& sends) const;
    std::vector<std::size_t> post_arrival(const std::vector<std::size_t>& digits,
                                          std::uint64_t arrival_mask) const;
    std::size_t buffer_digit(std::size_t i) const { return i * (1 + cfg_.num_rx); }
    Model3Config cfg_;
};

struct Model4Config {
    std::size_t num_tx = 2;
    std::size_t width = 4;
    std::size_t height = 4;
    std::vector<std::pair<std::size_t, std::size_t>> rx_positions{{0, 0}, {3, 3}};
    std::vector<std::size_t> speed{1};
    bool allow_stay = false;
    double path_loss_exponent = 2.0;
    double neg_throughput_w = 1.0;
    double rx_load_w = 0.5;
    double interference_w = 0.5;
    double gamma = 0.9;
    std::size_t state_cap = kDefaultStateCap;
};

/// Mobile transmitters on a grid; action associates each TX with a receiver.
class Model4 : public WirelessModel {
public:
    explicit Model4(Model4Config config);
    int model_id() const override { return 4; }
    std::vector<std::string> cost_names() const override;
    std::vector<double> cost_components(std::size_t s, std::size_t a) const override;
    void transition_row(std::size_t s, std::size_t a, RowRef row) const override;
    Sample sample(std::size_t s, std::size_t a, Rng& rng) const override;
    std::vector<double> features(std::size_t s) const override;
    const Model4Config& config() const noexcept { return cfg_; }

    std::size_t num_cells() const noexcept { return cells_.size(); }
    std::pair<std::size_t, std::size_t> cell(std::size_t index) const { return cells_[index]; }
    /// Feasible destination cells of TX i from a free cell, in a fixed order.
    const std::vector<std::size_t>& moves(std::size_t tx, std::size_t cell) const;
    double success_prob(std::size_t cell, std::size_t rx) const;

private:
    Model4Config cfg_;
    std::vector<std::pair<std::size_t, std::size_t>> cells_;
    std::vector<std::vector<std::vector<std::size_t>>> moves_;
};

} // namespace cousinsq
