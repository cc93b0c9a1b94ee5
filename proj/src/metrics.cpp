// SPDX-License-Identifier: Apache-2.0
#include "msat/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <set>

#include "msat/errors.hpp"

namespace msat {

namespace {

using NgramCounts = std::map<std::vector<std::string>, double>;

NgramCounts ngrams(const Tokens& tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                    tokens.begin() + static_cast<std::ptrdiff_t>(i + n))] += 1.0;
  }
  return counts;
}

void require_nonempty(std::span<const EvalPair> corpus, const char* metric) {
  if (corpus.empty()) throw ContractError(std::string(metric) + ": empty corpus");
  for (const auto& p : corpus) {
    if (p.references.empty()) throw ContractError(std::string(metric) + ": sample '" + p.id + "' has no reference");
  }
}

}  // namespace

double bleu(std::span<const EvalPair> corpus, std::size_t n) {
  require_nonempty(corpus, "BLEU");
  if (n < 1 || n > 4) throw ContractError("BLEU: order must be in [1, 4]");
  std::vector<double> matched(n, 0.0), total(n, 0.0);
  double cand_len = 0.0, ref_len = 0.0;
  for (const auto& p : corpus) {
    cand_len += static_cast<double>(p.candidate.size());
    // Closest reference length, shorter on ties.
    std::size_t best = p.references[0].size();
    for (const auto& r : p.references) {
      const auto d = [&](std::size_t len) {
        return std::abs(static_cast<long>(len) - static_cast<long>(p.candidate.size()));
      };
      if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
    }
    ref_len += static_cast<double>(best);
    for (std::size_t k = 1; k <= n; ++k) {
      NgramCounts cand = ngrams(p.candidate, k);
      NgramCounts max_ref;
      for (const auto& r : p.references)
        for (const auto& [g, c] : ngrams(r, k)) max_ref[g] = std::max(max_ref[g], c);
      for (const auto& [g, c] : cand) {
        total[k - 1] += c;
        auto it = max_ref.find(g);
        if (it != max_ref.end()) matched[k - 1] += std::min(c, it->second);
      }
    }
  }
  double log_sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (matched[k] == 0.0) return 0.0;
    log_sum += std::log(matched[k] / total[k]);
  }
  const double bp = cand_len < ref_len ? std::exp(1.0 - ref_len / cand_len) : 1.0;
  return bp * std::exp(log_sum / static_cast<double>(n));
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(std::span<const EvalPair> corpus) {
  require_nonempty(corpus, "ROUGE-L");
  constexpr double beta = 1.2;
  double total = 0.0;
  for (const auto& p : corpus) {
    if (p.candidate.empty()) continue;
    double prec = 0.0, rec = 0.0;
    for (const auto& r : p.references) {
      if (r.empty()) continue;
      const double l = static_cast<double>(lcs_length(p.candidate, r));
      prec = std::max(prec, l / static_cast<double>(p.candidate.size()));
      rec = std::max(rec, l / static_cast<double>(r.size()));
    }
    if (prec > 0.0 && rec > 0.0) total += (1.0 + beta * beta) * prec * rec / (rec + beta * beta * prec);
  }
  return total / static_cast<double>(corpus.size());
}

double cider(std::span<const EvalPair> corpus) {
  require_nonempty(corpus, "CIDEr");
  if (corpus.size() < 2) throw ContractError("CIDEr: needs at least two samples for document frequencies");
  const double docs = static_cast<double>(corpus.size());
  double total = 0.0;
  std::vector<double> per_sample(corpus.size(), 0.0);
  for (std::size_t n = 1; n <= 4; ++n) {
    std::map<std::vector<std::string>, double> df;
    for (const auto& p : corpus) {
      std::set<std::vector<std::string>> seen;
      for (const auto& r : p.references)
        for (const auto& [g, _] : ngrams(r, n)) seen.insert(g);
      for (const auto& g : seen) df[g] += 1.0;
    }
    auto tfidf = [&](const Tokens& tokens) {
      NgramCounts v = ngrams(tokens, n);
      double count = 0.0;
      for (const auto& [_, c] : v) count += c;
      for (auto& [g, w] : v) {
        auto it = df.find(g);
        // Unseen in references: df = 0 makes the weight irrelevant to any dot product,
        // but it still lengthens the vector; treat it as df = 1.
        const double d = it == df.end() ? 1.0 : it->second;
        w = (w / count) * std::log(docs / d);
      }
      return v;
    };
    auto norm = [](const NgramCounts& v) {
      double s = 0.0;
      for (const auto& [_, w] : v) s += w * w;
      return std::sqrt(s);
    };
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      const auto& p = corpus[i];
      NgramCounts c = tfidf(p.candidate);
      const double cn = norm(c);
      double sim = 0.0;
      for (const auto& r : p.references) {
        NgramCounts rv = tfidf(r);
        const double rn = norm(rv);
        if (cn == 0.0 || rn == 0.0) continue;
        double dot = 0.0;
        for (const auto& [g, w] : c) {
          auto it = rv.find(g);
          if (it != rv.end()) dot += w * it->second;
        }
        sim += dot / (cn * rn);
      }
      per_sample[i] += sim / static_cast<double>(p.references.size());
    }
  }
  for (double s : per_sample) total += 10.0 * s / 4.0;
  return total / docs;
}

MetricReport evaluate(std::span<const EvalPair> corpus) {
  MetricReport r;
  for (std::size_t n = 1; n <= 4; ++n) r.bleu[n - 1] = bleu(corpus, n);
  r.rouge_l = rouge_l(corpus);
  r.cider = cider(corpus);
  return r;
}

double micro_f1(std::span<const std::vector<double>> probabilities, std::span<const std::vector<double>> targets,
                double threshold) {
  if (probabilities.size() != targets.size()) throw ContractError("micro_f1: prediction and target counts differ");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t s = 0; s < targets.size(); ++s) {
    if (probabilities[s].size() != targets[s].size()) throw ContractError("micro_f1: label counts differ");
    for (std::size_t k = 0; k < targets[s].size(); ++k) {
      const bool predicted = probabilities[s][k] >= threshold;
      const bool actual = targets[s][k] > 0.5;
      tp += predicted && actual;
      fp += predicted && !actual;
      fn += !predicted && actual;
    }
  }
  if (tp == 0) return 0.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

}  // namespace msat
