#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace slt {

struct EvalReport {
    double bleu1 = 0.0;
    double bleu2 = 0.0;
    double bleu3 = 0.0;
    double bleu4 = 0.0;
    double rouge_l = 0.0;
    std::size_t corpus_size = 0;
};

// Corpus BLEU on a 0-100 scale: clipped n-gram precision with uniform 1/max_n
// weights, exp(1 - r/c) brevity penalty, no smoothing, one reference per
// hypothesis, whitespace tokens.
double bleu(const std::vector<std::string>& hyps, const std::vector<std::string>& refs,
            int max_n);

// Mean per-sentence LCS F1 on a 0-100 scale.
double rouge_l(const std::vector<std::string>& hyps, const std::vector<std::string>& refs);

EvalReport evaluate_corpus(const std::vector<std::string>& hyps,
                           const std::vector<std::string>& refs);

std::string format_eval_report(const EvalReport& report);

} // namespace slt
