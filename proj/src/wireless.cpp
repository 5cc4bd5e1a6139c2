#include "cousinsq/wireless.hpp"

#include "cousinsq/errors.hpp"

#include <Eigen/LU>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace cousinsq {

namespace {

using Dist = std::vector<std::pair<std::size_t, double>>;

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

template <typename T>
void broadcast(std::vector<T>& values, std::size_t n, const char* name) {
    if (values.size() == 1 && n > 1) {
        values.assign(n, values.front());
    }
    if (values.size() != n) {
        throw ArgumentError(fmt::format("{} needs 1 or {} entries, got {}", name, n, values.size()));
    }
}

void check_probability(double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw ArgumentError(fmt::format("{} must lie in [0, 1], got {}", name, p));
    }
}

void check_weight(double w, const char* name) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
        throw ArgumentError(fmt::format("cost weight {} must be finite and >= 0", name));
    }
}

void check_gamma(double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) {
        throw ArgumentError(fmt::format("gamma must lie in (0, 1), got {}", gamma));
    }
}

Matrix distances_or_unit(const Matrix& given, std::size_t n) {
    if (given.size() == 0) {
        Matrix d = Matrix::Ones(idx(n), idx(n));
        d.diagonal().setZero();
        return d;
    }
    if (given.rows() != idx(n) || given.cols() != idx(n)) {
        throw ArgumentError(fmt::format("tx_distance must be {}x{}", n, n));
    }
    for (Eigen::Index i = 0; i < given.rows(); ++i) {
        for (Eigen::Index j = 0; j < given.cols(); ++j) {
            if (i != j && !(given(i, j) > 0.0)) {
                throw ArgumentError("distances between distinct transmitters must be positive");
            }
            if (std::abs(given(i, j) - given(j, i)) > 1e-12) {
                throw ArgumentError("tx_distance must be symmetric");
            }
        }
    }
    return given;
}

Dist channel_row(const GilbertElliotChannel& ch, std::size_t c) {
    Dist out;
    for (Eigen::Index j = 0; j < ch.transition.cols(); ++j) {
        const double p = ch.transition(idx(c), j);
        if (p > 0.0) {
            out.emplace_back(static_cast<std::size_t>(j), p);
        }
    }
    return out;
}

/// Adds weight * prod_d comps[d] into row over the mixed-radix product.
void accumulate(const std::vector<Dist>& comps, const std::vector<std::size_t>& strides,
                double weight, RowRef row) {
    std::function<void(std::size_t, std::size_t, double)> rec = [&](std::size_t d,
                                                                     std::size_t base, double p) {
        if (d == comps.size()) {
            row(idx(base)) += p;
            return;
        }
        for (const auto& [value, q] : comps[d]) {
            if (q > 0.0) {
                rec(d + 1, base + value * strides[d], p * q);
            }
        }
    };
    rec(0, 0, weight);
}

double mask_probability(std::uint64_t mask, const std::vector<double>& probs) {
    double p = 1.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        p *= (mask >> i) & 1U ? probs[i] : 1.0 - probs[i];
    }
    return p;
}

/// Distribution of the number of successes among independent trials.
std::vector<double> success_counts(const std::vector<double>& probs) {
    std::vector<double> dist{1.0};
    for (double p : probs) {
        std::vector<double> next(dist.size() + 1, 0.0);
        for (std::size_t k = 0; k < dist.size(); ++k) {
            next[k] += dist[k] * (1.0 - p);
            next[k + 1] += dist[k] * p;
        }
        dist = std::move(next);
    }
    return dist;
}

std::size_t positive_excess(std::size_t load) { return load > 1 ? load - 1 : 0; }

} // namespace

void GilbertElliotChannel::validate() const {
    const auto n = quality.size();
    if (n < 2) {
        throw ArgumentError("a Gilbert-Elliott channel needs at least 2 states");
    }
    if (transition.rows() != idx(n) || transition.cols() != idx(n)) {
        throw ArgumentError("channel transition matrix must be square over the channel states");
    }
    if (transition.minCoeff() < 0.0 ||
        (transition.rowwise().sum().array() - 1.0).abs().maxCoeff() > kStochasticTol) {
        throw InvariantError("channel transition matrix must be row-stochastic");
    }
    for (std::size_t i = 0; i < n; ++i) {
        check_probability(quality[i], "channel quality");
        if (i > 0 && quality[i] > quality[i - 1]) {
            throw ArgumentError("channel quality must be nonincreasing (state 0 is best)");
        }
    }
}

Vector GilbertElliotChannel::stationary() const {
    const auto n = idx(num_states());
    Matrix a = transition.transpose() - Matrix::Identity(n, n);
    a.row(n - 1).setOnes();
    Vector b = Vector::Zero(n);
    b(n - 1) = 1.0;
    return a.fullPivLu().solve(b);
}

std::size_t GilbertElliotChannel::sample_next(std::size_t c, Rng& rng) const {
    const double u = uniform01(rng);
    double cumulative = 0.0;
    std::size_t last = c;
    for (Eigen::Index j = 0; j < transition.cols(); ++j) {
        const double p = transition(idx(c), j);
        if (p <= 0.0) {
            continue;
        }
        last = static_cast<std::size_t>(j);
        cumulative += p;
        if (u < cumulative) {
            return last;
        }
    }
    return last;
}

GilbertElliotChannel GilbertElliotChannel::banded(std::size_t n, double stay, double q_best,
                                                  double q_worst) {
    if (n < 2) {
        throw ArgumentError("a Gilbert-Elliott channel needs at least 2 states");
    }
    check_probability(stay, "stay probability");
    GilbertElliotChannel ch;
    ch.transition = Matrix::Zero(idx(n), idx(n));
    for (std::size_t i = 0; i < n; ++i) {
        ch.transition(idx(i), idx(i)) = stay;
        const bool down = i > 0;
        const bool up = i + 1 < n;
        const double move = 1.0 - stay;
        if (down && up) {
            ch.transition(idx(i), idx(i - 1)) = move / 2.0;
            ch.transition(idx(i), idx(i + 1)) = move / 2.0;
        } else if (down) {
            ch.transition(idx(i), idx(i - 1)) = move;
        } else {
            ch.transition(idx(i), idx(i + 1)) = move;
        }
        ch.quality.push_back(q_best + (q_worst - q_best) * static_cast<double>(i) /
                                          static_cast<double>(n - 1));
    }
    ch.validate();
    return ch;
}

MixedRadix::MixedRadix(std::vector<std::size_t> radices, std::size_t cap)
    : radices_(std::move(radices)), strides_(radices_.size(), 1) {
    size_ = 1;
    for (std::size_t d = radices_.size(); d-- > 0;) {
        if (radices_[d] == 0) {
            throw ArgumentError("every radix must be positive");
        }
        strides_[d] = size_;
        if (size_ > cap / radices_[d]) {
            throw SizeError(fmt::format("space size exceeds the cap of {}", cap));
        }
        size_ *= radices_[d];
    }
    if (size_ > cap) {
        throw SizeError(fmt::format("space size {} exceeds the cap of {}", size_, cap));
    }
}

std::vector<std::size_t> MixedRadix::decode(std::size_t index) const {
    if (index >= size_) {
        throw IndexError(fmt::format("index {} out of range [0, {})", index, size_));
    }
    std::vector<std::size_t> out(radices_.size());
    for (std::size_t d = 0; d < radices_.size(); ++d) {
        out[d] = index / strides_[d];
        index %= strides_[d];
    }
    return out;
}

std::size_t MixedRadix::encode(const std::vector<std::size_t>& digits) const {
    if (digits.size() != radices_.size()) {
        throw ArgumentError("wrong number of digits");
    }
    std::size_t out = 0;
    for (std::size_t d = 0; d < digits.size(); ++d) {
        if (digits[d] >= radices_[d]) {
            throw IndexError(fmt::format("digit {} = {} out of range [0, {})", d, digits[d],
                                         radices_[d]));
        }
        out += digits[d] * strides_[d];
    }
    return out;
}

std::vector<double> WirelessModel::features(std::size_t s) const {
    const auto digits = decode(s);
    return {digits.begin(), digits.end()};
}

double WirelessModel::cost(std::size_t s, std::size_t a) const {
    const auto parts = cost_components(s, a);
    double total = 0.0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        total += weights_[i] * parts[i];
    }
    return total;
}

Matrix WirelessModel::expected_costs() const {
    Matrix c(idx(num_states()), idx(num_actions()));
    for (std::size_t s = 0; s < num_states(); ++s) {
        for (std::size_t a = 0; a < num_actions(); ++a) {
            c(idx(s), idx(a)) = cost(s, a);
        }
    }
    return c;
}

Mdp WirelessModel::materialize(std::size_t dense_cap) const {
    const std::size_t ns = num_states();
    const std::size_t na = num_actions();
    if (ns > dense_cap / ns || ns * ns > dense_cap / na) {
        throw SizeError(fmt::format("materializing {} states x {} actions exceeds the dense cap {}",
                                    ns, na, dense_cap));
    }
    std::vector<Matrix> probs(na, Matrix::Zero(idx(ns), idx(ns)));
    for (std::size_t a = 0; a < na; ++a) {
        for (std::size_t s = 0; s < ns; ++s) {
            transition_row(s, a, probs[a].row(idx(s)));
        }
    }
    return Mdp(TransitionTensor(std::move(probs)), CostModel(expected_costs()), gamma_);
}

void WirelessModel::set_spaces(std::vector<std::size_t> state_radices,
                               std::vector<std::size_t> action_radices, std::size_t state_cap) {
    states_ = MixedRadix(std::move(state_radices), state_cap);
    actions_ = MixedRadix(std::move(action_radices));
}

// Model 1 ------------------------------------------------------------------

Model1::Model1(Model1Config config) : cfg_(std::move(config)) {
    const std::size_t n = cfg_.num_tx;
    if (n < 1 || n > 16) {
        throw ArgumentError("model 1 supports 1 to 16 transmitters");
    }
    if (cfg_.buffer_size < 1) {
        throw ArgumentError("buffer_size must be >= 1");
    }
    broadcast(cfg_.arrival_prob, n, "arrival_prob");
    broadcast(cfg_.channels, n, "channels");
    for (double p : cfg_.arrival_prob) check_probability(p, "arrival_prob");
    for (const auto& ch : cfg_.channels) ch.validate();
    cfg_.tx_distance = distances_or_unit(cfg_.tx_distance, n);
    if (!(cfg_.interference >= 0.0)) throw ArgumentError("interference must be >= 0");
    if (!(cfg_.drop_surcharge >= 0.0)) throw ArgumentError("drop_surcharge must be >= 0");
    check_weight(cfg_.buffer_w, "buffer_w");
    check_weight(cfg_.channel_w, "channel_w");
    check_weight(cfg_.collision_w, "collision_w");
    check_gamma(cfg_.gamma);
    gamma_ = cfg_.gamma;
    weights_ = {cfg_.buffer_w, cfg_.channel_w, cfg_.collision_w};
    std::vector<std::size_t> radices;
    for (std::size_t i = 0; i < n; ++i) {
        radices.push_back(cfg_.buffer_size + 1);
        radices.push_back(cfg_.channels[i].num_states());
    }
    set_spaces(std::move(radices), {std::size_t{1} << n}, cfg_.state_cap);
}

std::vector<std::string> Model1::cost_names() const { return {"buffer", "channel", "collision"}; }

double Model1::success_prob(std::size_t i, std::size_t channel, std::size_t mask) const {
    double p = cfg_.channels[i].quality[channel];
    for (std::size_t j = 0; j < cfg_.num_tx; ++j) {
        if (j != i && ((mask >> j) & 1U)) {
            p *= 1.0 - std::min(1.0, cfg_.interference / cfg_.tx_distance(idx(i), idx(j)));
        }
    }
    return p;
}

std::vector<double> Model1::cost_components(std::size_t s, std::size_t a) const {
    const auto d = decode(s);
    if (a >= num_actions()) throw IndexError(fmt::format("action {} out of range", a));
    double buffer = 0.0;
    double channel = 0.0;
    double pair_sum = 0.0;
    std::size_t active = 0;
    for (std::size_t i = 0; i < cfg_.num_tx; ++i) {
        const std::size_t b = d[2 * i];
        buffer += static_cast<double>(b);
        if (b == cfg_.buffer_size) {
            buffer += cfg_.drop_surcharge * cfg_.arrival_prob[i];
        }
        if ((a >> i) & 1U) {
            ++active;
            channel += 1.0 - cfg_.channels[i].quality[d[2 * i + 1]];
            for (std::size_t j = i + 1; j < cfg_.num_tx; ++j) {
                if ((a >> j) & 1U) {
                    pair_sum += 1.0 / cfg_.tx_distance(idx(i), idx(j));
                }
            }
        }
    }
    const double collision = static_cast<double>(positive_excess(active)) * pair_sum;
    return {buffer, channel, collision};
}

void Model1::transition_row(std::size_t s, std::size_t a, RowRef row) const {
    const auto d = decode(s);
    std::vector<Dist> comps;
    for (std::size_t i = 0; i < cfg_.num_tx; ++i) {
        const std::size_t b = d[2 * i];
        const std::size_t c = d[2 * i + 1];
        const double p = cfg_.arrival_prob[i];
        const bool sends = (a >> i) & 1U;
        const double sigma = sends ? success_prob(i, c, a) : 0.0;
        Dist buffer;
        for (int arrived = 0; arrived < 2; ++arrived) {
            const double pa = arrived ? p : 1.0 - p;
            const std::size_t b1 = arrived ? std::min(b + 1, cfg_.buffer_size) : b;
            if (sends && b1 > 0) {
                buffer.emplace_back(b1 - 1, pa * sigma);
                buffer.emplace_back(b1, pa * (1.0 - sigma));
            } else {
                buffer.emplace_back(b1, pa);
            }
        }
        comps.push_back(std::move(buffer));
        comps.push_back(channel_row(cfg_.channels[i], c));
    }
    accumulate(comps, states_.strides(), 1.0, row);
}

Sample Model1::sample(std::size_t s, std::size_t a, Rng& rng) const {
    auto d = decode(s);
    if (a >= num_actions()) throw IndexError(fmt::format("action {} out of range", a));
    const double c = cost(s, a);
    for (std::size_t i = 0; i < cfg_.num_tx; ++i) {
        if (uniform01(rng) < cfg_.arrival_prob[i]) {
            d[2 * i] = std::min(d[2 * i] + 1, cfg_.buffer_size);
        }
    }
    for (std::size_t i = 0; i < cfg_.num_tx; ++i) {
        if (((a >> i) & 1U) && d[2 * i] > 0) {
            if (uniform01(rng) < success_prob(i, d[2 * i + 1], a)) {
                --d[2 * i];
            }
        }
    }
    for (std::size_t i = 0; i < cfg_.num_tx; ++i) {
        d[2 * i + 1] = cfg_.channels[i].sample_next(d[2 * i + 1], rng);
    }
    return {encode(d), c};
}

// Model 2 ------------------------------------------------------------------

Model2::Model2(Model2Config config) : cfg_(std::move(config)) {
    const std::size_t n = cfg_.num_tx;
    const std::size_t m = cfg_.num_relays;
    if (n < 1 || n > 16) throw ArgumentError("model 2 supports 1 to 16 transmitters");
    if (cfg_.battery_size < 1) throw ArgumentError("battery_size must be >= 1");
    if (cfg_.direct_energy < 1 || cfg_.relay_energy < 1) {
        throw ArgumentError("transmission energies must be >= 1");
    }
    broadcast(cfg_.harvest_prob, n, "harvest_prob");
    broadcast(cfg_.direct_channels, n, "direct_channels");
    if (m > 0) {
        broadcast(cfg_.relay_channels, m, "relay_channels");
        broadcast(cfg_.relay_corruption, m, "relay_corruption");
    } else {
        cfg_.relay_channels.clear();
        cfg_.relay_corruption.clear();
    }
    for (double p : cfg_.harvest_prob) check_probability(p, "harvest_prob");
    for (double p : cfg_.relay_corruption) check_probability(p, "relay_corruption");
    for (const auto& ch : cfg_.direct_channels) ch.validate();
    for (const auto& ch : cfg_.relay_channels) ch.validate();
    check_weight(cfg_.neg_throughput_w, "neg_throughput_w");
    check_weight(cfg_.drop_w, "drop_w");
    check_weight(cfg_.battery_w, "battery_w");
    check_gamma(cfg_.gamma);
    gamma_ = cfg_.gamma;
    weights_ = {cfg_.neg_throughput_w, cfg_.drop_w, cfg_.battery_w};
    std::vector<std::size_t> radices;
    for (std::size_t i = 0; i < n; ++i) {
        radices.push_back(cfg_.battery_size + 1);
        radices.push_back(cfg_.direct_channels[i].num_states());
    }
    for (std::size_t r = 0; r < m; ++r) {
        radices.push_back(cfg_.relay_channels[r].num_states());
    }
    set_spaces(std::move(radices), std::vector<std::size_t>(n, m + 1), cfg_.state_cap);
}

std::vector<std::string> Model2::cost_names() const {
    return {"neg_throughput", "drop", "battery"};
}

Model2::Outcome Model2::resolve(const std::vector<std::size_t>& d,
                                const std::vector<std::size_t>& choice,
                                std::uint64_t harvest_mask) const {
    const std::size_t n = cfg_.num_tx;
    Outcome out;
    out.battery.resize(n);
    std::vector<bool> active(n, false);
    std::vector<std::size_t> load(cfg_.num_relays, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t e1 =
            std::min(d[2 * i] + ((harvest_mask >> i) & 1U), cfg_.battery_size);
        const std::size_t need = choice[i] == 0 ? cfg_.direct_energy : cfg_.relay_energy;
        active[i] = e1 >= need;
        out.battery[i] = active[i] ? e1 - need : e1;
        if (active[i]) {
            out.energy += static_cast<double>(need);
            if (choice[i] > 0) {
                ++load[choice[i] - 1];
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!active[i]) {
            continue;
        }
        if (choice[i] == 0) {
            out.successes += cfg_.direct_channels[i].quality[d[2 * i + 1]];
        } else {
            const std::size_t r = choice[i] - 1;
            const double q = cfg_.relay_channels[r].quality[d[2 * n + r]];
            out.successes += q * (1.0 - cfg_.relay_corruption[r]) / static_cast<double>(load[r]);
        }
    }
    for (std::size_t l : load) {
        out.dropped += static_cast<double>(positive_excess(l));
    }
    return out;
}

std::vector<double> Model2::cost_components(std::size_t s, std::size_t a) const {
    const auto d = decode(s);
    const auto choice = actions_.decode(a);
    std::vector<double> total(3, 0.0);
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << cfg_.num_tx); ++mask) {
        const double p = mask_probability(mask, cfg_.harvest_prob);
        if (p == 0.0) continue;
        const Outcome o = resolve(d, choice, mask);
        total[0] += p * (static_cast<double>(cfg_.num_tx) - o.successes);
        total[1] += p * o.dropped;
        total[2] += p * o.energy;
    }
    return total;
}

void Model2::transition_row(std::size_t s, std::size_t a, RowRef row) const {
    const auto d = decode(s);
    const auto choice = actions_.decode(a);
    const std::size_t n = cfg_.num_tx;
    std::vector<Dist> comps(states_.digits());
    for (std::size_t i = 0; i < n; ++i) {
        comps[2 * i + 1] = channel_row(cfg_.direct_channels[i], d[2 * i + 1]);
    }
    for (std::size_t r = 0; r < cfg_.num_relays; ++r) {
        comps[2 * n + r] = channel_row(cfg_.relay_channels[r], d[2 * n + r]);
    }
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
        const double p = mask_probability(mask, cfg_.harvest_prob);
        if (p == 0.0) continue;
        const Outcome o = resolve(d, choice, mask);
        for (std::size_t i = 0; i < n; ++i) {
            comps[2 * i] = {{o.battery[i], 1.0}};
        }
        accumulate(comps, states_.strides(), p, row);
    }
}

Sample Model2::sample(std::size_t s, std::size_t a, Rng& rng) const {
    auto d = decode(s);
    const auto choice = actions_.decode(a);
    const double c = cost(s, a);
    const std::size_t n = cfg_.num_tx;
    std::uint64_t mask = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (uniform01(rng) < cfg_.harvest_prob[i]) {
            mask |= std::uint64_t{1} << i;
        }
    }
    const Outcome o = resolve(d, choice, mask);
    for (std::size_t i = 0; i < n; ++i) {
        d[2 * i] = o.battery[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
        d[2 * i + 1] = cfg_.direct_channels[i].sample_next(d[2 * i + 1], rng);
    }
    for (std::size_t r = 0; r < cfg_.num_relays; ++r) {
        d[2 * n + r] = cfg_.relay_channels[r].sample_next(d[2 * n + r], rng);
    }
    return {encode(d), c};
}

// Model 3 ------------------------------------------------------------------

Model3::Model3(Model3Config config) : cfg_(std::move(config)) {
    const std::size_t n = cfg_.num_tx;
    const std::size_t r = cfg_.num_rx;
    if (n < 1 || n > 16) throw ArgumentError("model 3 supports 1 to 16 transmitters");
    if (r < 1) throw ArgumentError("num_rx must be >= 1");
    if (cfg_.buffer_size < 1) throw ArgumentError("buffer_size must be >= 1");
    if (cfg_.max_send < 1 || cfg_.max_send > r) {
        throw ArgumentError("max_send must lie in [1, num_rx]");
    }
    if (cfg_.channel_classes.empty()) throw ArgumentError("at least one channel class is required");
    for (const auto& ch : cfg_.channel_classes) ch.validate();
    broadcast(cfg_.arrival_prob, n, "arrival_prob");
    for (double p : cfg_.arrival_prob) check_probability(p, "arrival_prob");
    if (cfg_.distance_class.empty()) {
        const std::size_t top = cfg_.channel_classes.size() - 1;
        cfg_.distance_class.assign(n, std::vector<std::size_t>(r, 0));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < r; ++k) {
                const std::size_t gap = i > k ? i - k : k - i;
                cfg_.distance_class[i][k] = std::min(gap, top);
            }
        }
    }
    if (cfg_.distance_class.size() != n) throw ArgumentError("distance_class needs num_tx rows");
    for (const auto& row : cfg_.distance_class) {
        if (row.size() != r) throw ArgumentError("distance_class rows need num_rx entries");
        for (std::size_t c : row) {
            if (c >= cfg_.channel_classes.size()) {
                throw ArgumentError(fmt::format("distance class {} has no channel parameters", c));
            }
        }
    }
    cfg_.tx_distance = distances_or_unit(cfg_.tx_distance, n);
    check_probability(cfg_.rx_collision, "rx_collision");
    if (!(cfg_.drop_surcharge >= 0.0)) throw ArgumentError("drop_surcharge must be >= 0");
    check_weight(cfg_.buffer_w, "buffer_w");
    check_weight(cfg_.channel_w, "channel_w");
    check_weight(cfg_.collision_w, "collision_w");
    check_weight(cfg_.rx_load_w, "rx_load_w");
    check_gamma(cfg_.gamma);
    gamma_ = cfg_.gamma;
    weights_ = {cfg_.buffer_w, cfg_.channel_w, cfg_.collision_w, cfg_.rx_load_w};
    std::vector<std::size_t> radices;
    for (std::size_t i = 0; i < n; ++i) {
        radices.push_back(cfg_.buffer_size + 1);
        for (std::size_t k = 0; k < r; ++k) {
            radices.push_back(channel(i, k).num_states());
        }
    }
    set_spaces(std::move(radices), std::vector<std::size_t>(n, cfg_.max_send + 1), cfg_.state_cap);
}

const GilbertElliotChannel& Model3::channel(std::size_t tx, std::size_t rx) const {
    return cfg_.channel_classes[cfg_.distance_class[tx][rx]];
}

std::vector<std::string> Model3::cost_names() const {
    return {"buffer", "channel", "collision", "rx_load"};
}

std::vector<std::size_t> Model3::post_arrival(const std::vector<std::size_t>& d,
                                              std::uint64_t mask) const {
    std::vector<std::size_t> b(cfg_.num_tx);
    for (std::size_t i = 0; i < cfg_.num_tx; ++i) {
        b[i] = std::min(d[buffer_digit(i)] + ((mask >> i) & 1U), cfg_.buffer_size);
    }
    return b;
}

Model3::Plan Model3::plan(const std::vector<std::size_t>& d,
                          const std::vector<std::size_t>& sends) const {
    const std::size_t n = cfg_.num_tx;
    const std::size_t r = cfg_.num_rx;
    Plan p;
    p.receivers.resize(n);
    p.success.resize(n);
    p.load.assign(r, 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> order(r);
        std::iota(order.begin(), order.end(), 0);
        auto quality = [&](std::size_t k) {
            return channel(i, k).quality[d[buffer_digit(i) + 1 + k]];
        };
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t x, std::size_t y) { return quality(x) > quality(y); });
        order.resize(sends[i]);
        for (std::size_t k : order) {
            ++p.load[k];
        }
        p.receivers[i] = std::move(order);
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k : p.receivers[i]) {
            const double q = channel(i, k).quality[d[buffer_digit(i) + 1 + k]];
            p.success[i].push_back(
                q * std::pow(1.0 - cfg_.rx_collision, static_cast<double>(p.load[k] - 1)));
        }
    }
    return p;
}

std::vector<double> Model3::cost_components(std::size_t s, std::size_t a) const {
    const auto d = decode(s);
    const auto x = actions_.decode(a);
    const std::size_t n = cfg_.num_tx;
    double buffer = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t b = d[buffer_digit(i)];
        buffer += static_cast<double>(b);
        if (b == cfg_.buffer_size) {
            buffer += cfg_.drop_surcharge * cfg_.arrival_prob[i];
        }
    }
    double channel_cost = 0.0;
    double collision = 0.0;
    double rx_load = 0.0;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
        const double pm = mask_probability(mask, cfg_.arrival_prob);
        if (pm == 0.0) continue;
        const auto b1 = post_arrival(d, mask);
        std::vector<std::size_t> sends(n);
        std::size_t packets = 0;
        for (std::size_t i = 0; i < n; ++i) {
            sends[i] = std::min(x[i], b1[i]);
            packets += sends[i];
        }
        const Plan p = plan(d, sends);
        double ch = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k : p.receivers[i]) {
                ch += 1.0 - channel(i, k).quality[d[buffer_digit(i) + 1 + k]];
            }
        }
        double pair_sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                const bool share = std::any_of(
                    p.receivers[i].begin(), p.receivers[i].end(), [&](std::size_t k) {
                        return std::find(p.receivers[j].begin(), p.receivers[j].end(), k) !=
                               p.receivers[j].end();
                    });
                if (share) {
                    pair_sum += 1.0 / cfg_.tx_distance(idx(i), idx(j));
                }
            }
        }
        double load = 0.0;
        for (std::size_t l : p.load) {
            load += static_cast<double>(positive_excess(l));
        }
        channel_cost += pm * ch;
        collision += pm * static_cast<double>(positive_excess(packets)) * pair_sum;
        rx_load += pm * load;
    }
    return {buffer, channel_cost, collision, rx_load};
}

void Model3::transition_row(std::size_t s, std::size_t a, RowRef row) const {
    const auto d = decode(s);
    const auto x = actions_.decode(a);
    const std::size_t n = cfg_.num_tx;
    std::vector<Dist> comps(states_.digits());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < cfg_.num_rx; ++k) {
            const std::size_t digit = buffer_digit(i) + 1 + k;
            comps[digit] = channel_row(channel(i, k), d[digit]);
        }
    }
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
        const double pm = mask_probability(mask, cfg_.arrival_prob);
        if (pm == 0.0) continue;
        const auto b1 = post_arrival(d, mask);
        std::vector<std::size_t> sends(n);
        for (std::size_t i = 0; i < n; ++i) {
            sends[i] = std::min(x[i], b1[i]);
        }
        const Plan p = plan(d, sends);
        for (std::size_t i = 0; i < n; ++i) {
            const auto counts = success_counts(p.success[i]);
            Dist buffer;
            for (std::size_t k = 0; k < counts.size(); ++k) {
                buffer.emplace_back(b1[i] - k, counts[k]);
            }
            comps[buffer_digit(i)] = std::move(buffer);
        }
        accumulate(comps, states_.strides(), pm, row);
    }
}

Sample Model3::sample(std::size_t s, std::size_t a, Rng& rng) const {
    auto d = decode(s);
    const auto x = actions_.decode(a);
    const double c = cost(s, a);
    const std::size_t n = cfg_.num_tx;
    std::uint64_t mask = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (uniform01(rng) < cfg_.arrival_prob[i]) {
            mask |= std::uint64_t{1} << i;
        }
    }
    auto b = post_arrival(d, mask);
    std::vector<std::size_t> sends(n);
    for (std::size_t i = 0; i < n; ++i) {
        sends[i] = std::min(x[i], b[i]);
    }
    const Plan p = plan(d, sends);
    for (std::size_t i = 0; i < n; ++i) {
        for (double q : p.success[i]) {
            if (uniform01(rng) < q) {
                --b[i];
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        d[buffer_digit(i)] = b[i];
        for (std::size_t k = 0; k < cfg_.num_rx; ++k) {
            const std::size_t digit = buffer_digit(i) + 1 + k;
            d[digit] = channel(i, k).sample_next(d[digit], rng);
        }
    }
    return {encode(d), c};
}

// Model 4 ------------------------------------------------------------------

Model4::Model4(Model4Config config) : cfg_(std::move(config)) {
    const std::size_t n = cfg_.num_tx;
    if (n < 1) throw ArgumentError("num_tx must be >= 1");
    if (cfg_.width < 1 || cfg_.height < 1) throw ArgumentError("grid must be nonempty");
    if (cfg_.rx_positions.empty()) throw ArgumentError("at least one receiver is required");
    for (const auto& [x, y] : cfg_.rx_positions) {
        if (x >= cfg_.width || y >= cfg_.height) {
            throw ArgumentError(fmt::format("receiver ({}, {}) lies outside the grid", x, y));
        }
    }
    broadcast(cfg_.speed, n, "speed");
    if (!(cfg_.path_loss_exponent > 0.0)) throw ArgumentError("path_loss_exponent must be > 0");
    check_weight(cfg_.neg_throughput_w, "neg_throughput_w");
    check_weight(cfg_.rx_load_w, "rx_load_w");
    check_weight(cfg_.interference_w, "interference_w");
    check_gamma(cfg_.gamma);
    gamma_ = cfg_.gamma;
    weights_ = {cfg_.neg_throughput_w, cfg_.rx_load_w, cfg_.interference_w};

    std::vector<long> cell_index(cfg_.width * cfg_.height, -1);
    auto is_rx = [&](std::size_t x, std::size_t y) {
        return std::find(cfg_.rx_positions.begin(), cfg_.rx_positions.end(),
                         std::make_pair(x, y)) != cfg_.rx_positions.end();
    };
    for (std::size_t y = 0; y < cfg_.height; ++y) {
        for (std::size_t x = 0; x < cfg_.width; ++x) {
            if (!is_rx(x, y)) {
                cell_index[y * cfg_.width + x] = static_cast<long>(cells_.size());
                cells_.emplace_back(x, y);
            }
        }
    }
    if (cells_.empty()) throw ArgumentError("receivers occupy every grid cell");
    moves_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto step = static_cast<long>(cfg_.speed[i]);
        moves_[i].resize(cells_.size());
        for (std::size_t c = 0; c < cells_.size(); ++c) {
            const auto x = static_cast<long>(cells_[c].first);
            const auto y = static_cast<long>(cells_[c].second);
            std::vector<std::pair<long, long>> targets{
                {x + step, y}, {x - step, y}, {x, y + step}, {x, y - step}};
            if (cfg_.allow_stay) {
                targets.emplace_back(x, y);
            }
            auto& out = moves_[i][c];
            for (const auto& [tx, ty] : targets) {
                if (tx < 0 || ty < 0 || tx >= static_cast<long>(cfg_.width) ||
                    ty >= static_cast<long>(cfg_.height)) {
                    continue;
                }
                const long target = cell_index[static_cast<std::size_t>(ty) * cfg_.width +
                                                static_cast<std::size_t>(tx)];
                if (target >= 0) {
                    out.push_back(static_cast<std::size_t>(target));
                }
            }
            if (out.empty()) {
                out.push_back(c);
            }
        }
    }
    set_spaces(std::vector<std::size_t>(n, cells_.size()),
               std::vector<std::size_t>(n, cfg_.rx_positions.size()), cfg_.state_cap);
}

std::vector<std::string> Model4::cost_names() const {
    return {"neg_throughput", "rx_load", "interference"};
}

const std::vector<std::size_t>& Model4::moves(std::size_t tx, std::size_t cell) const {
    return moves_.at(tx).at(cell);
}

double Model4::success_prob(std::size_t cell, std::size_t rx) const {
    const auto [x, y] = cells_[cell];
    const auto [rx_x, rx_y] = cfg_.rx_positions[rx];
    const double dx = static_cast<double>(x) - static_cast<double>(rx_x);
    const double dy = static_cast<double>(y) - static_cast<double>(rx_y);
    const double dist = std::sqrt(dx * dx + dy * dy);
    return std::clamp(std::pow(dist, -cfg_.path_loss_exponent), 0.05, 0.95);
}

std::vector<double> Model4::features(std::size_t s) const {
    const auto d = decode(s);
    std::vector<double> out;
    for (std::size_t c : d) {
        out.push_back(static_cast<double>(cells_[c].first));
        out.push_back(static_cast<double>(cells_[c].second));
    }
    return out;
}

std::vector<double> Model4::cost_components(std::size_t s, std::size_t a) const {
    const auto d = decode(s);
    const auto assoc = actions_.decode(a);
    const std::size_t n = cfg_.num_tx;
    double throughput = 0.0;
    std::vector<std::size_t> load(cfg_.rx_positions.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
        throughput += 1.0 - success_prob(d[i], assoc[i]);
        ++load[assoc[i]];
    }
    double rx_load = 0.0;
    for (std::size_t l : load) {
        rx_load += static_cast<double>(positive_excess(l));
    }
    double interference = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (assoc[i] != assoc[j]) continue;
            const double dx = static_cast<double>(cells_[d[i]].first) -
                              static_cast<double>(cells_[d[j]].first);
            const double dy = static_cast<double>(cells_[d[i]].second) -
                              static_cast<double>(cells_[d[j]].second);
            const double dist = std::max(std::sqrt(dx * dx + dy * dy), 0.5);
            interference += 1.0 / (dist * dist);
        }
    }
    return {throughput, rx_load, interference};
}

void Model4::transition_row(std::size_t s, std::size_t a, RowRef row) const {
    if (a >= num_actions()) throw IndexError(fmt::format("action {} out of range", a));
    const auto d = decode(s);
    std::vector<Dist> comps(cfg_.num_tx);
    for (std::size_t i = 0; i < cfg_.num_tx; ++i) {
        const auto& targets = moves_[i][d[i]];
        const double p = 1.0 / static_cast<double>(targets.size());
        for (std::size_t c : targets) {
            comps[i].emplace_back(c, p);
        }
    }
    accumulate(comps, states_.strides(), 1.0, row);
}

Sample Model4::sample(std::size_t s, std::size_t a, Rng& rng) const {
    auto d = decode(s);
    const double c = cost(s, a);
    for (std::size_t i = 0; i < cfg_.num_tx; ++i) {
        const auto& targets = moves_[i][d[i]];
        d[i] = targets[uniform_index(rng, targets.size())];
    }
    return {encode(d), c};
}

} // namespace cousinsq
