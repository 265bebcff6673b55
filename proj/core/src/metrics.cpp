#include "slt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "slt/error.hpp"

namespace slt {

namespace {

std::vector<std::string> tokens_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string word;
    while (in >> word) out.push_back(std::move(word));
    return out;
}

void check_corpus(const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
    if (hyps.size() != refs.size()) {
        throw DimensionError("metrics: " + std::to_string(hyps.size()) + " hypotheses for " +
                             std::to_string(refs.size()) + " references");
    }
    if (hyps.empty()) throw DomainError("metrics: empty corpus");
}

std::map<std::vector<std::string>, std::size_t> ngram_counts(
    const std::vector<std::string>& toks, std::size_t n) {
    std::map<std::vector<std::string>, std::size_t> counts;
    if (toks.size() >= n) {
        for (std::size_t i = 0; i + n <= toks.size(); ++i) {
            counts[std::vector<std::string>(toks.begin() + i, toks.begin() + i + n)] += 1;
        }
    }
    return counts;
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = 0;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

} // namespace

double bleu(const std::vector<std::string>& hyps, const std::vector<std::string>& refs,
            int max_n) {
    check_corpus(hyps, refs);
    if (max_n < 1) throw ConfigError("bleu: max_n must be at least 1");

    std::vector<std::vector<std::string>> hyp_toks, ref_toks;
    hyp_toks.reserve(hyps.size());
    ref_toks.reserve(refs.size());
    std::size_t hyp_len = 0, ref_len = 0;
    for (std::size_t i = 0; i < hyps.size(); ++i) {
        hyp_toks.push_back(tokens_of(hyps[i]));
        ref_toks.push_back(tokens_of(refs[i]));
        hyp_len += hyp_toks.back().size();
        ref_len += ref_toks.back().size();
    }
    if (hyp_len == 0) return 0.0;

    double log_sum = 0.0;
    for (int n = 1; n <= max_n; ++n) {
        std::size_t clipped = 0, total = 0;
        for (std::size_t i = 0; i < hyps.size(); ++i) {
            auto hgrams = ngram_counts(hyp_toks[i], static_cast<std::size_t>(n));
            auto rgrams = ngram_counts(ref_toks[i], static_cast<std::size_t>(n));
            for (const auto& [gram, count] : hgrams) {
                auto it = rgrams.find(gram);
                clipped += std::min(count, it == rgrams.end() ? 0 : it->second);
            }
            if (hyp_toks[i].size() >= static_cast<std::size_t>(n)) {
                total += hyp_toks[i].size() - static_cast<std::size_t>(n) + 1;
            }
        }
        if (clipped == 0 || total == 0) return 0.0;
        log_sum += std::log(static_cast<double>(clipped) / static_cast<double>(total));
    }

    double brevity = 1.0;
    if (hyp_len < ref_len) {
        brevity = std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
    }
    return 100.0 * brevity * std::exp(log_sum / max_n);
}

double rouge_l(const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
    check_corpus(hyps, refs);
    double total_f = 0.0;
    for (std::size_t i = 0; i < hyps.size(); ++i) {
        std::vector<std::string> h = tokens_of(hyps[i]), r = tokens_of(refs[i]);
        if (h.empty() || r.empty()) continue;
        double m = static_cast<double>(lcs_length(h, r));
        if (m == 0.0) continue;
        double p = m / static_cast<double>(h.size());
        double rec = m / static_cast<double>(r.size());
        total_f += 2.0 * p * rec / (p + rec);
    }
    return 100.0 * total_f / static_cast<double>(hyps.size());
}

EvalReport evaluate_corpus(const std::vector<std::string>& hyps,
                           const std::vector<std::string>& refs) {
    EvalReport report;
    report.bleu1 = bleu(hyps, refs, 1);
    report.bleu2 = bleu(hyps, refs, 2);
    report.bleu3 = bleu(hyps, refs, 3);
    report.bleu4 = bleu(hyps, refs, 4);
    report.rouge_l = rouge_l(hyps, refs);
    report.corpus_size = hyps.size();
    return report;
}

std::string format_eval_report(const EvalReport& report) {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(2);
    out << "sentences " << report.corpus_size << "\n";
    out << "BLEU-1 " << report.bleu1 << "\n";
    out << "BLEU-2 " << report.bleu2 << "\n";
    out << "BLEU-3 " << report.bleu3 << "\n";
    out << "BLEU-4 " << report.bleu4 << "\n";
    out << "ROUGE-L " << report.rouge_l << "\n";
    return out.str();
}

} // namespace slt
