#include "rollgen/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace rollgen {

namespace {

double total_mass(std::span<const token_distribution::entry> entries) {
    double sum = 0.0;
    for (const auto & e : entries) {
        sum += e.p;
    }
    return sum;
}

// Renormalizes a non-empty set of positive weights into a distribution.
token_distribution normalized(std::vector<token_distribution::entry> entries, std::size_t vocab_size) {
    const double sum = total_mass(entries);
    if (!(sum > 0.0) || !std::isfinite(sum)) {
        throw infrastructure_error("cannot renormalize a distribution with zero total mass");
    }
    for (auto & e : entries) {
        e.p /= sum;
    }
    return token_distribution::from_entries(std::move(entries), vocab_size);
}

// Entries ordered by decreasing probability, ties by increasing id.
std::vector<token_distribution::entry> by_probability(const token_distribution & dist) {
    std::vector<token_distribution::entry> sorted(dist.entries().begin(), dist.entries().end());
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto & a, const auto & b) { return a.p > b.p; });
    return sorted;
}

double parse_number(std::string_view text, std::string_view what) {
    // std::from_chars for double is not available in every libstdc++ we target.
    std::string s(text);
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception &) {
        used = 0;
    }
    if (used == 0 || used != s.size()) {
        throw std::invalid_argument("invalid " + std::string(what) + ": '" + s + "'");
    }
    return v;
}

} // namespace

token_distribution token_distribution::from_entries(std::vector<entry> entries, std::size_t vocab_size) {
    std::sort(entries.begin(), entries.end(), [](const entry & a, const entry & b) { return a.id < b.id; });
    double sum = 0.0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const entry & e = entries[i];
        if (!(e.p >= 0.0) || !std::isfinite(e.p)) {
            throw std::invalid_argument("token distribution: negative or non-finite probability");
        }
        if (e.id < 0 || static_cast<std::size_t>(e.id) >= vocab_size) {
            throw std::invalid_argument("token distribution: token id outside the vocabulary");
        }
        if (i > 0 && entries[i - 1].id == e.id) {
            throw std::invalid_argument("token distribution: duplicate token id");
        }
        sum += e.p;
    }
    if (std::abs(sum - 1.0) > k_normalization_tolerance) {
        throw std::invalid_argument("token distribution: probabilities sum to " + std::to_string(sum));
    }
    std::erase_if(entries, [](const entry & e) { return e.p == 0.0; });

    token_distribution d;
    d.entries_    = std::move(entries);
    d.vocab_size_ = vocab_size;
    return d;
}

token_distribution token_distribution::from_dense(std::span<const double> probs) {
    std::vector<entry> entries;
    entries.reserve(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        entries.push_back({static_cast<token_id>(i), probs[i]});
    }
    return from_entries(std::move(entries), probs.size());
}

token_distribution token_distribution::one_hot(token_id id, std::size_t vocab_size) {
    return from_entries({{id, 1.0}}, vocab_size);
}

token_distribution token_distribution::from_logprobs(std::span<const std::pair<token_id, double>> logprobs,
                                                     std::size_t vocab_size) {
    if (logprobs.empty()) {
        throw std::invalid_argument("token distribution: no log-probabilities");
    }
    double max_lp = -std::numeric_limits<double>::infinity();
    for (const auto & [id, lp] : logprobs) {
        max_lp = std::max(max_lp, lp);
    }
    std::vector<entry> entries;
    entries.reserve(logprobs.size());
    for (const auto & [id, lp] : logprobs) {
        entries.push_back({id, std::exp(lp - max_lp)});
    }
    return normalized(std::move(entries), vocab_size);
}

double token_distribution::prob(token_id id) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), id,
                               [](const entry & e, token_id v) { return e.id < v; });
    return it != entries_.end() && it->id == id ? it->p : 0.0;
}

std::vector<double> token_distribution::dense() const {
    std::vector<double> out(vocab_size_, 0.0);
    for (const auto & e : entries_) {
        out[static_cast<std::size_t>(e.id)] = e.p;
    }
    return out;
}

token_id token_distribution::argmax() const {
    if (entries_.empty()) {
        throw std::logic_error("argmax of an empty distribution");
    }
    const entry * best = &entries_.front();
    for (const auto & e : entries_) {
        if (e.p > best->p) {
            best = &e;
        }
    }
    return best->id;
}

double entropy(const token_distribution & dist) {
    const double sum = total_mass(dist.entries());
    if (std::abs(sum - 1.0) > k_normalization_tolerance) {
        throw std::invalid_argument("entropy: distribution is not normalized");
    }
    double h = 0.0;
    for (const auto & e : dist.entries()) {
        if (e.p > 0.0) {
            h -= e.p * std::log(e.p);
        }
    }
    return std::max(h, 0.0);
}

token_distribution constrain(const token_distribution & dist, const penalty_map & penalties) {
    if (penalties.empty()) {
        return dist;
    }
    std::vector<token_distribution::entry> weighted(dist.entries().begin(), dist.entries().end());
    for (auto & e : weighted) {
        if (auto it = penalties.find(e.id); it != penalties.end()) {
            e.p *= it->second;
        }
    }
    return normalized(std::move(weighted), dist.vocab_size());
}

sampling_policy sampling_policy::with_temperature(double t) {
    if (!(t >= 0.0) || !std::isfinite(t)) {
        throw std::invalid_argument("temperature must be >= 0");
    }
    sampling_policy p;
    p.mode        = kind::temperature;
    p.temperature = t;
    return p;
}

sampling_policy sampling_policy::with_top_k(int k) {
    if (k < 1) {
        throw std::invalid_argument("top-k requires k >= 1");
    }
    sampling_policy p;
    p.mode = kind::top_k;
    p.k    = k;
    return p;
}

sampling_policy sampling_policy::with_nucleus(double top_p) {
    if (!(top_p > 0.0 && top_p <= 1.0)) {
        throw std::invalid_argument("nucleus requires 0 < p <= 1");
    }
    sampling_policy p;
    p.mode  = kind::nucleus;
    p.top_p = top_p;
    return p;
}

sampling_policy sampling_policy::parse(std::string_view spec) {
    if (spec == "greedy") {
        return greedy();
    }
    const auto colon = spec.find(':');
    if (colon == std::string_view::npos) {
        throw std::invalid_argument("unknown sampling policy '" + std::string(spec) + "'");
    }
    const std::string_view name  = spec.substr(0, colon);
    const std::string_view value = spec.substr(colon + 1);
    if (name == "temp") {
        return with_temperature(parse_number(value, "temperature"));
    }
    if (name == "topk") {
        const double k = parse_number(value, "k");
        if (k != std::floor(k)) {
            throw std::invalid_argument("top-k requires an integer k");
        }
        return with_top_k(static_cast<int>(k));
    }
    if (name == "nucleus") {
        return with_nucleus(parse_number(value, "nucleus p"));
    }
    throw std::invalid_argument("unknown sampling policy '" + std::string(spec) + "'");
}

std::string sampling_policy::to_string() const {
    auto num = [](double v) {
        std::string s = std::to_string(v);
        s.erase(s.find_last_not_of('0') + 1);
        if (!s.empty() && s.back() == '.') {
            s.pop_back();
        }
        return s;
    };
    switch (mode) {
        case kind::greedy:      return "greedy";
        case kind::temperature: return "temp:" + num(temperature);
        case kind::top_k:       return "topk:" + std::to_string(k);
        case kind::nucleus:     return "nucleus:" + num(top_p);
    }
    return "greedy";
}

token_distribution policy_distribution(const token_distribution & dist, const sampling_policy & policy) {
    using kind = sampling_policy::kind;
    const std::size_t vocab = dist.vocab_size();

    if (policy.mode == kind::greedy || (policy.mode == kind::temperature && policy.temperature == 0.0)) {
        return token_distribution::one_hot(dist.argmax(), vocab);
    }

    if (policy.mode == kind::temperature) {
        // log-domain rescaling: exp((log p - max log p) / T)
        double max_lp = -std::numeric_limits<double>::infinity();
        for (const auto & e : dist.entries()) {
            max_lp = std::max(max_lp, std::log(e.p));
        }
        std::vector<token_distribution::entry> scaled;
        scaled.reserve(dist.entries().size());
        for (const auto & e : dist.entries()) {
            scaled.push_back({e.id, std::exp((std::log(e.p) - max_lp) / policy.temperature)});
        }
        return normalized(std::move(scaled), vocab);
    }

    auto sorted = by_probability(dist);
    if (policy.mode == kind::top_k) {
        sorted.resize(std::min<std::size_t>(sorted.size(), static_cast<std::size_t>(policy.k)));
        return normalized(std::move(sorted), vocab);
    }

    // nucleus: the longest prefix whose cumulative mass stays <= p, never empty
    std::size_t keep = 0;
    double cumulative = 0.0;
    for (const auto & e : sorted) {
        if (keep > 0 && cumulative + e.p > policy.top_p + 1e-12) {
            break;
        }
        cumulative += e.p;
        ++keep;
    }
    sorted.resize(keep);
    return normalized(std::move(sorted), vocab);
}

token_sampler::token_sampler(sampling_policy policy, std::uint64_t seed) : policy_(policy), rng_(seed) {}

double token_sampler::next_unit() {
    // 53 random bits -> [0, 1), independent of the standard library's distributions
    return static_cast<double>(rng_() >> 11) * 0x1.0p-53;
}

token_id token_sampler::sample(const token_distribution & dist) {
    const auto effective = policy_distribution(dist, policy_);
    const auto entries   = effective.entries();
    if (entries.size() == 1) {
        return entries.front().id;
    }
    const double u = next_unit();
    double cumulative = 0.0;
    for (const auto & e : entries) {
        cumulative += e.p;
        if (u < cumulative) {
            return e.id;
        }
    }
    return entries.back().id;
}

} // namespace rollgen
