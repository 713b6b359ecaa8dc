#include "gslt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "gslt/errors.hpp"

namespace gslt {

int edit_distance(const TokenSequence& a, const TokenSequence& b) {
    const std::size_t m = a.size(), n = b.size();
    std::vector<int> prev(n + 1), cur(n + 1);
    for (std::size_t j = 0; j <= n; ++j) prev[j] = static_cast<int>(j);
    for (std::size_t i = 1; i <= m; ++i) {
        cur[0] = static_cast<int>(i);
        for (std::size_t j = 1; j <= n; ++j) {
            const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
        }
        std::swap(prev, cur);
    }
    return prev[n];
}

double wer(const TokenSequence& reference, const TokenSequence& hypothesis) {
    if (reference.empty()) throw ContractError("wer: empty reference");
    return static_cast<double>(edit_distance(reference, hypothesis)) /
           static_cast<double>(reference.size());
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, int>;

NgramCounts count_ngrams(const TokenSequence& tokens, int n) {
    NgramCounts counts;
    if (static_cast<int>(tokens.size()) < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i)
        ++counts[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)];
    return counts;
}

}  // namespace

std::array<double, 4> bleu(const std::vector<TokenSequence>& references,
                           const std::vector<TokenSequence>& hypotheses, bool smooth) {
    if (references.empty() || references.size() != hypotheses.size())
        throw ContractError("bleu: need equally many references and hypotheses");

    long ref_len = 0, hyp_len = 0;
    std::array<long, 4> matches{}, totals{};
    for (std::size_t i = 0; i < references.size(); ++i) {
        ref_len += static_cast<long>(references[i].size());
        hyp_len += static_cast<long>(hypotheses[i].size());
        for (int n = 1; n <= 4; ++n) {
            const NgramCounts ref_counts = count_ngrams(references[i], n);
            for (const auto& [ngram, count] : count_ngrams(hypotheses[i], n)) {
                totals[n - 1] += count;
                auto it = ref_counts.find(ngram);
                if (it != ref_counts.end()) matches[n - 1] += std::min(count, it->second);
            }
        }
    }

    const double bp =
        hyp_len >= ref_len
            ? 1.0
            : (hyp_len == 0 ? 0.0
                            : std::exp(1.0 - static_cast<double>(ref_len) / hyp_len));

    std::array<double, 4> precisions{};
    for (int n = 1; n <= 4; ++n) {
        long num = matches[n - 1], den = totals[n - 1];
        if (smooth && n >= 2) {
            ++num;
            ++den;
        }
        precisions[n - 1] = den == 0 ? 0.0 : static_cast<double>(num) / den;
    }

    std::array<double, 4> scores{};
    for (int k = 1; k <= 4; ++k) {
        double log_sum = 0.0;
        bool zero = false;
        for (int n = 1; n <= k; ++n) {
            if (precisions[n - 1] == 0.0) {
                zero = true;
                break;
            }
            log_sum += std::log(precisions[n - 1]) / k;
        }
        scores[k - 1] = zero ? 0.0 : bp * std::exp(log_sum);
    }
    return scores;
}

double rouge_l_f1(const TokenSequence& reference, const TokenSequence& hypothesis) {
    if (reference.empty()) throw ContractError("rouge_l_f1: empty reference");
    if (hypothesis.empty()) return 0.0;
    const std::size_t m = reference.size(), n = hypothesis.size();
    std::vector<int> prev(n + 1, 0), cur(n + 1, 0);
    for (std::size_t i = 1; i <= m; ++i) {
        for (std::size_t j = 1; j <= n; ++j) {
            cur[j] = reference[i - 1] == hypothesis[j - 1] ? prev[j - 1] + 1
                                                           : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    const double lcs = prev[n];
    if (lcs == 0.0) return 0.0;
    const double precision = lcs / static_cast<double>(n);
    const double recall = lcs / static_cast<double>(m);
    return 2.0 * precision * recall / (precision + recall);
}

}  // namespace gslt
