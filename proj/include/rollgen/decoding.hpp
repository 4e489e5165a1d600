#pragma once

#include "rollgen/report.hpp"
#include "rollgen/trie.hpp"

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace rollgen {

inline constexpr double k_normalization_tolerance = 1e-6;

//
// Next-token probabilities over a vocabulary. Stored sparsely: tokens without
// an entry have probability 0. Entries are sorted by token id.
//
class token_distribution {
public:
    struct entry {
        token_id id;
        double p;
    };

    token_distribution() = default;

    // Throws std::invalid_argument on negative entries, duplicate ids, ids
    // outside the vocabulary, or a sum further than 1e-6 from 1.
    static token_distribution from_entries(std::vector<entry> entries, std::size_t vocab_size);
    static token_distribution from_dense(std::span<const double> probs);
    static token_distribution one_hot(token_id id, std::size_t vocab_size);
    // Softmax over the given log-probabilities; every other token gets 0.
    static token_distribution from_logprobs(std::span<const std::pair<token_id, double>> logprobs,
                                            std::size_t vocab_size);

    double prob(token_id id) const;
    std::span<const entry> entries() const { return entries_; }
    std::size_t vocab_size() const { return vocab_size_; }
    std::vector<double> dense() const;
    token_id argmax() const;  // ties go to the lowest id

private:
    std::vector<entry> entries_;
    std::size_t vocab_size_ = 0;
};

// Shannon entropy in nats. Rejects unnormalized input.
double entropy(const token_distribution & dist);

// p_c(v) = p(v) * PN(v) / sum_w p(w) * PN(w); tokens missing from `penalties` keep factor 1.
token_distribution constrain(const token_distribution & dist, const penalty_map & penalties);

struct sampling_policy {
    enum class kind { greedy, temperature, top_k, nucleus };

    kind mode = kind::greedy;
    double temperature = 1.0;
    int k = 1;
    double top_p = 1.0;

    static sampling_policy greedy() { return {}; }
    static sampling_policy with_temperature(double t);
    static sampling_policy with_top_k(int k);
    static sampling_policy with_nucleus(double p);

    // Parses `greedy`, `temp:T`, `topk:K` or `nucleus:P`.
    static sampling_policy parse(std::string_view spec);
    std::string to_string() const;
};

// The distribution a policy actually samples from, after truncation and
// rescaling. Greedy and T = 0 collapse to a one-hot on the argmax.
token_distribution policy_distribution(const token_distribution & dist, const sampling_policy & policy);

class token_sampler {
public:
    token_sampler(sampling_policy policy, std::uint64_t seed);

    token_id sample(const token_distribution & dist);
    const sampling_policy & policy() const { return policy_; }

private:
    double next_unit();

    sampling_policy policy_;
    std::mt19937_64 rng_;
};

} // namespace rollgen
