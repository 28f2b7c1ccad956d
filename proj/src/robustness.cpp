#include "hmlab/robustness.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "hmlab/metric.hpp"
#include "hmlab/samplers.hpp"

namespace hmlab {

void EvalCorpus::validate() const {
  if (gallery.rows() == 0 || gallery_labels.empty()) throw std::invalid_argument("empty gallery");
  if (gallery.rows() != gallery_labels.size()) throw ShapeError("gallery rows and labels disagree");
  if (queries.rows() != query_labels.size()) throw ShapeError("query rows and labels disagree");
  if (queries_are_gallery && queries.shape() != gallery.shape()) {
    throw ShapeError("self-retrieval corpus needs identical query and gallery sets");
  }
  const std::set<int> known(gallery_labels.begin(), gallery_labels.end());
  for (int l : query_labels) {
    if (!known.count(l)) throw std::invalid_argument("query label " + std::to_string(l) + " missing from gallery");
  }
}

namespace {

constexpr std::ptrdiff_t kNone = -1;

std::vector<double> distances_to(std::span<const double> q, const Tensor& gallery) {
  std::vector<double> d(gallery.rows());
  for (std::size_t g = 0; g < gallery.rows(); ++g) d[g] = euclidean(q, gallery.row(g));
  return d;
}

/// Gallery indices ordered by distance (ties by index), skipping `skip`.
std::vector<std::size_t> ranking(const std::vector<double>& d, std::ptrdiff_t skip) {
  std::vector<std::size_t> order;
  order.reserve(d.size());
  for (std::size_t g = 0; g < d.size(); ++g) {
    if (static_cast<std::ptrdiff_t>(g) != skip) order.push_back(g);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] < d[b] || (d[a] == d[b] && a < b); });
  return order;
}

std::ptrdiff_t self_index(const EvalCorpus& corpus, std::size_t query) {
  return corpus.queries_are_gallery ? static_cast<std::ptrdiff_t>(query) : kNone;
}

std::vector<std::ptrdiff_t> self_indices(const EvalCorpus& corpus) {
  std::vector<std::ptrdiff_t> out(corpus.queries.rows());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = self_index(corpus, i);
  return out;
}

RetrievalMetrics metrics_with_skip(const Tensor& q, std::span<const int> ql, const Tensor& g, std::span<const int> gl,
                                   std::span<const std::ptrdiff_t> skip) {
  if (g.rows() == 0) throw std::invalid_argument("empty gallery");
  if (q.rows() == 0) throw std::invalid_argument("no queries");
  RetrievalMetrics m;
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const auto order = ranking(distances_to(q.row(i), g), skip[i]);
    const auto match = [&](std::size_t pos) { return pos < order.size() && gl[order[pos]] == ql[i]; };
    if (match(0)) m.r_at_1 += 1.0;
    if (match(0) || match(1)) m.r_at_2 += 1.0;
    double hits = 0.0, ap = 0.0;
    for (std::size_t k = 0; k < order.size(); ++k) {
      if (gl[order[k]] == ql[i]) {
        hits += 1.0;
        ap += hits / static_cast<double>(k + 1);
      }
    }
    if (hits > 0.0) m.map += ap / hits;
  }
  const double n = static_cast<double>(q.rows());
  return {100.0 * m.r_at_1 / n, 100.0 * m.r_at_2 / n, 100.0 * m.map / n};
}

double recall_at_1(const Tensor& q, std::span<const int> ql, const Tensor& g, std::span<const int> gl,
                   std::span<const std::ptrdiff_t> skip) {
  return metrics_with_skip(q, ql, g, gl, skip).r_at_1;
}

Tensor plus(const Tensor& x, const Tensor& r) {
  Tensor out = x;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += r[i];
  return out;
}

/// Percent of ranked gallery entries strictly closer to q than `target_distance`.
double rank_percent(const std::vector<double>& d, double target_distance, std::ptrdiff_t skip_a,
                    std::ptrdiff_t skip_b) {
  std::size_t closer = 0;
  for (std::size_t g = 0; g < d.size(); ++g) {
    const auto gi = static_cast<std::ptrdiff_t>(g);
    if (gi == skip_a || gi == skip_b) continue;
    if (d[g] < target_distance) ++closer;
  }
  return 100.0 * static_cast<double>(closer) / static_cast<double>(d.size());
}

struct ClassIndex {
  std::vector<int> classes;
  std::map<int, std::vector<std::size_t>> gallery;
  std::map<int, std::vector<std::size_t>> queries;

  int next_class(int c) const {
    auto it = std::upper_bound(classes.begin(), classes.end(), c);
    return it == classes.end() ? classes.front() : *it;
  }
};

ClassIndex index_classes(const EvalCorpus& corpus) {
  ClassIndex idx;
  for (std::size_t g = 0; g < corpus.gallery_labels.size(); ++g) idx.gallery[corpus.gallery_labels[g]].push_back(g);
  for (std::size_t q = 0; q < corpus.query_labels.size(); ++q) idx.queries[corpus.query_labels[q]].push_back(q);
  for (const auto& [c, _] : idx.gallery) idx.classes.push_back(c);
  return idx;
}

std::vector<std::size_t> first_n(const std::vector<std::size_t>& v, std::size_t n) {
  return {v.begin(), v.begin() + static_cast<std::ptrdiff_t>(std::min(n, v.size()))};
}

Tensor embed_perturbed(const EncoderModel& model, const Tensor& x, const Tensor& r) {
  return model.embed_values(plus(x, r));
}

/// Nearest gallery index (by clean embeddings) satisfying pred, skipping self.
template <class Pred>
std::size_t nearest_where(const std::vector<double>& d, std::ptrdiff_t skip, Pred pred) {
  std::size_t best = d.size();
  for (std::size_t g = 0; g < d.size(); ++g) {
    if (static_cast<std::ptrdiff_t>(g) == skip || !pred(g)) continue;
    if (best == d.size() || d[g] < d[best]) best = g;
  }
  if (best == d.size()) throw std::invalid_argument("no gallery entry satisfies the attack target rule");
  return best;
}

Tensor rows_of(const Tensor& t, const std::vector<std::size_t>& idx) { return gather_rows(t, idx); }

}  // namespace

RetrievalMetrics retrieval_metrics(const Tensor& query_embeddings, std::span<const int> query_labels,
                                   const Tensor& gallery_embeddings, std::span<const int> gallery_labels,
                                   bool exclude_self) {
  std::vector<std::ptrdiff_t> skip(query_embeddings.rows(), kNone);
  if (exclude_self) std::iota(skip.begin(), skip.end(), 0);
  return metrics_with_skip(query_embeddings, query_labels, gallery_embeddings, gallery_labels, skip);
}

RetrievalMetrics benign_metrics(const EncoderModel& model, const EvalCorpus& corpus) {
  corpus.validate();
  const Tensor g = model.embed_values(corpus.gallery);
  const Tensor q = model.embed_values(corpus.queries);
  return metrics_with_skip(q, corpus.query_labels, g, corpus.gallery_labels, self_indices(corpus));
}

EmbeddingShiftResult attack_es(const EncoderModel& model, const EvalCorpus& corpus, const AttackConfig& config) {
  corpus.validate();
  const Tensor g = model.embed_values(corpus.gallery);
  const Tensor clean = model.embed_values(corpus.queries);
  // The shift objective has zero gradient at r = 0; start from a seeded point in [-alpha, alpha].
  PgdOptions options;
  options.initial = Tensor(corpus.queries.shape());
  Rng rng(config.seed);
  std::uniform_real_distribution<double> init(-config.budget.alpha, config.budget.alpha);
  for (double& v : options.initial.storage()) v = init(rng);
  const Objective objective = [&](grad::Tape& tape, grad::Node x) {
    const grad::Node e = embed(tape, model.bind(tape, false), x);
    return grad::sum(tape, grad::euclidean_rowwise(tape, e, tape.constant(clean)));
  };
  const PgdResult res = pgd_maximize(objective, corpus.queries, config.budget, options);
  const Tensor shifted = embed_perturbed(model, corpus.queries, res.perturbation);
  double total = 0.0;
  for (std::size_t i = 0; i < shifted.rows(); ++i) total += euclidean(shifted.row(i), clean.row(i));
  return {total / static_cast<double>(shifted.rows()),
          recall_at_1(shifted, corpus.query_labels, g, corpus.gallery_labels, self_indices(corpus))};
}

double attack_ca(const EncoderModel& model, const EvalCorpus& corpus, RankDirection direction,
                 const AttackConfig& config) {
  corpus.validate();
  const ClassIndex idx = index_classes(corpus);
  const Tensor g = model.embed_values(corpus.gallery);
  const Tensor q = model.embed_values(corpus.queries);

  std::vector<std::size_t> candidates;            // gallery index per class group
  std::vector<std::vector<std::size_t>> groups;   // query indices per group
  for (int c : idx.classes) {
    const auto qit = idx.queries.find(c);
    if (qit == idx.queries.end()) continue;
    const int cand_class = direction == RankDirection::Plus ? idx.next_class(c) : c;
    candidates.push_back(idx.gallery.at(cand_class).front());
    groups.push_back(first_n(qit->second, config.candidates_per_class));
  }
  std::vector<std::size_t> repeat, query_rows;
  for (std::size_t k = 0; k < groups.size(); ++k) {
    for (std::size_t qi : groups[k]) {
      repeat.push_back(k);
      query_rows.push_back(qi);
    }
  }
  const Tensor targets = rows_of(q, query_rows);
  const Objective objective = [&](grad::Tape& tape, grad::Node x) {
    const grad::Node e = grad::gather_rows(tape, embed(tape, model.bind(tape, false), x), repeat);
    return grad::sum(tape, grad::euclidean_rowwise(tape, e, tape.constant(targets)));
  };
  const Tensor x = rows_of(corpus.gallery, candidates);
  const PgdResult res = direction == RankDirection::Plus ? pgd_minimize(objective, x, config.budget)
                                                         : pgd_maximize(objective, x, config.budget);
  const Tensor moved = embed_perturbed(model, x, res.perturbation);

  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < groups.size(); ++k) {
    for (std::size_t qi : groups[k]) {
      const auto cand = static_cast<std::ptrdiff_t>(candidates[k]);
      if (self_index(corpus, qi) == cand) continue;
      const auto d = distances_to(q.row(qi), g);
      total += rank_percent(d, euclidean(q.row(qi), moved.row(k)), cand, self_index(corpus, qi));
      ++count;
    }
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

double attack_qa(const EncoderModel& model, const EvalCorpus& corpus, RankDirection direction,
                 const AttackConfig& config) {
  corpus.validate();
  const ClassIndex idx = index_classes(corpus);
  const Tensor g = model.embed_values(corpus.gallery);

  std::vector<std::size_t> query_rows;
  std::vector<std::vector<std::size_t>> designated;
  for (int c : idx.classes) {
    const auto qit = idx.queries.find(c);
    if (qit == idx.queries.end()) continue;
    const int cand_class = direction == RankDirection::Plus ? idx.next_class(c) : c;
    const auto cands = first_n(idx.gallery.at(cand_class), config.candidates_per_class);
    for (std::size_t qi : first_n(qit->second, config.candidates_per_class)) {
      query_rows.push_back(qi);
      std::vector<std::size_t> own;
      for (std::size_t ci : cands) {
        if (self_index(corpus, qi) != static_cast<std::ptrdiff_t>(ci)) own.push_back(ci);
      }
      designated.push_back(std::move(own));
    }
  }
  std::vector<std::size_t> repeat, cand_rows;
  for (std::size_t k = 0; k < query_rows.size(); ++k) {
    for (std::size_t ci : designated[k]) {
      repeat.push_back(k);
      cand_rows.push_back(ci);
    }
  }
  const Tensor targets = rows_of(g, cand_rows);
  const Objective objective = [&](grad::Tape& tape, grad::Node x) {
    const grad::Node e = grad::gather_rows(tape, embed(tape, model.bind(tape, false), x), repeat);
    return grad::sum(tape, grad::euclidean_rowwise(tape, e, tape.constant(targets)));
  };
  const Tensor x = rows_of(corpus.queries, query_rows);
  const PgdResult res = direction == RankDirection::Plus ? pgd_minimize(objective, x, config.budget)
                                                         : pgd_maximize(objective, x, config.budget);
  const Tensor moved = embed_perturbed(model, x, res.perturbation);

  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < query_rows.size(); ++k) {
    const auto d = distances_to(moved.row(k), g);
    const std::ptrdiff_t self = self_index(corpus, query_rows[k]);
    for (std::size_t ci : designated[k]) {
      total += rank_percent(d, d[ci], static_cast<std::ptrdiff_t>(ci), self);
      ++count;
    }
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

double attack_tma(const EncoderModel& model, const EvalCorpus& corpus, const AttackConfig& config) {
  corpus.validate();
  const Tensor g = model.embed_values(corpus.gallery);
  Rng rng(config.seed);
  std::vector<std::size_t> partners;
  for (std::size_t i = 0; i < corpus.queries.rows(); ++i) {
    std::vector<std::size_t> pool;
    for (std::size_t j = 0; j < corpus.gallery_labels.size(); ++j) {
      if (corpus.gallery_labels[j] != corpus.query_labels[i]) pool.push_back(j);
    }
    if (pool.empty()) throw std::invalid_argument("TMA needs a cross-class partner for every query");
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    partners.push_back(pool[pick(rng)]);
  }
  const Tensor targets = rows_of(g, partners);
  const Objective objective = [&](grad::Tape& tape, grad::Node x) {
    const grad::Node e = embed(tape, model.bind(tape, false), x);
    return grad::sum(tape, grad::cosine_rowwise(tape, e, tape.constant(targets)));
  };
  const PgdResult res = pgd_maximize(objective, corpus.queries, config.budget);
  const Tensor moved = embed_perturbed(model, corpus.queries, res.perturbation);
  double total = 0.0;
  for (std::size_t i = 0; i < moved.rows(); ++i) total += cosine_similarity(moved.row(i), targets.row(i));
  return total / static_cast<double>(moved.rows());
}

double attack_ltm(const EncoderModel& model, const EvalCorpus& corpus, const AttackConfig& config) {
  corpus.validate();
  const Tensor g = model.embed_values(corpus.gallery);
  const Tensor q = model.embed_values(corpus.queries);
  std::vector<std::size_t> matched, unmatched;
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const auto d = distances_to(q.row(i), g);
    const int label = corpus.query_labels[i];
    matched.push_back(nearest_where(d, self_index(corpus, i), [&](std::size_t j) { return corpus.gallery_labels[j] == label; }));
    unmatched.push_back(nearest_where(d, self_index(corpus, i), [&](std::size_t j) { return corpus.gallery_labels[j] != label; }));
  }
  const Tensor tm = rows_of(g, matched), tu = rows_of(g, unmatched);
  const Objective objective = [&](grad::Tape& tape, grad::Node x) {
    const grad::Node e = embed(tape, model.bind(tape, false), x);
    return grad::sum(tape, grad::sub(tape, grad::euclidean_rowwise(tape, e, tape.constant(tm)),
                                     grad::euclidean_rowwise(tape, e, tape.constant(tu))));
  };
  const PgdResult res = pgd_maximize(objective, corpus.queries, config.budget);
  const Tensor moved = embed_perturbed(model, corpus.queries, res.perturbation);
  return recall_at_1(moved, corpus.query_labels, g, corpus.gallery_labels, self_indices(corpus));
}

double attack_gtm(const EncoderModel& model, const EvalCorpus& corpus, const AttackConfig& config) {
  corpus.validate();
  const Tensor g = model.embed_values(corpus.gallery);
  const Tensor q = model.embed_values(corpus.queries);
  std::vector<std::size_t> unmatched;
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const auto d = distances_to(q.row(i), g);
    const int label = corpus.query_labels[i];
    unmatched.push_back(nearest_where(d, self_index(corpus, i), [&](std::size_t j) { return corpus.gallery_labels[j] != label; }));
  }
  const Tensor tu = rows_of(g, unmatched);
  const Objective objective = [&](grad::Tape& tape, grad::Node x) {
    const grad::Node e = embed(tape, model.bind(tape, false), x);
    return grad::sum(tape, grad::euclidean_rowwise(tape, e, tape.constant(tu)));
  };
  const PgdResult res = pgd_minimize(objective, corpus.queries, config.budget);
  const Tensor moved = embed_perturbed(model, corpus.queries, res.perturbation);
  return recall_at_1(moved, corpus.query_labels, g, corpus.gallery_labels, self_indices(corpus));
}

double attack_gtt(const EncoderModel& model, const EvalCorpus& corpus, const AttackConfig& config) {
  corpus.validate();
  constexpr std::size_t kTopK = 4;
  const Tensor g = model.embed_values(corpus.gallery);
  const Tensor q = model.embed_values(corpus.queries);
  std::vector<std::size_t> top1, boundary;
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const auto order = ranking(distances_to(q.row(i), g), self_index(corpus, i));
    if (order.size() <= kTopK) throw std::invalid_argument("GTT needs more than 4 gallery entries per query");
    top1.push_back(order[0]);
    boundary.push_back(order[kTopK]);
  }
  const Tensor t1 = rows_of(g, top1), tb = rows_of(g, boundary);
  // Push the top-1 candidate past the clean 5th-ranked one.
  const Objective objective = [&](grad::Tape& tape, grad::Node x) {
    const grad::Node e = embed(tape, model.bind(tape, false), x);
    return grad::sum(tape, grad::sub(tape, grad::euclidean_rowwise(tape, e, tape.constant(t1)),
                                     grad::euclidean_rowwise(tape, e, tape.constant(tb))));
  };
  const PgdResult res = pgd_maximize(objective, corpus.queries, config.budget);
  const Tensor moved = embed_perturbed(model, corpus.queries, res.perturbation);
  double kept = 0.0;
  for (std::size_t i = 0; i < moved.rows(); ++i) {
    const auto order = ranking(distances_to(moved.row(i), g), self_index(corpus, i));
    if (std::find(order.begin(), order.begin() + kTopK, top1[i]) != order.begin() + kTopK) kept += 1.0;
  }
  return 100.0 * kept / static_cast<double>(moved.rows());
}

double ers(const RobustnessReport& r) {
  const double scores[] = {
      r.ca_plus / 100.0,         1.0 - r.ca_minus / 100.0, r.qa_plus / 100.0, 1.0 - r.qa_minus / 100.0,
      (1.0 - r.tma) / 2.0,       1.0 - r.es_d / 2.0,       r.es_r / 100.0,    r.ltm / 100.0,
      r.gtm / 100.0,             r.gtt / 100.0,
  };
  double total = 0.0;
  for (double s : scores) total += s;
  return 100.0 * total / static_cast<double>(std::size(scores));
}

RobustnessReport evaluate_robustness(const EncoderModel& model, const EvalCorpus& corpus,
                                     const AttackConfig& config) {
  RobustnessReport r;
  const RetrievalMetrics benign = benign_metrics(model, corpus);
  r.r_at_1 = benign.r_at_1;
  r.r_at_2 = benign.r_at_2;
  r.map = benign.map;
  r.ca_plus = attack_ca(model, corpus, RankDirection::Plus, config);
  r.ca_minus = attack_ca(model, corpus, RankDirection::Minus, config);
  r.qa_plus = attack_qa(model, corpus, RankDirection::Plus, config);
  r.qa_minus = attack_qa(model, corpus, RankDirection::Minus, config);
  r.tma = attack_tma(model, corpus, config);
  const EmbeddingShiftResult es = attack_es(model, corpus, config);
  r.es_d = es.mean_shift;
  r.es_r = es.recall;
  r.ltm = attack_ltm(model, corpus, config);
  r.gtm = attack_gtm(model, corpus, config);
  r.gtt = attack_gtt(model, corpus, config);
  r.ers = ers(r);
  return r;
}

nlohmann::json to_json(const RobustnessReport& r) {
  return {{"r_at_1", r.r_at_1}, {"r_at_2", r.r_at_2}, {"map", r.map},     {"ca_plus", r.ca_plus},
          {"ca_minus", r.ca_minus}, {"qa_plus", r.qa_plus}, {"qa_minus", r.qa_minus}, {"tma", r.tma},
          {"es_d", r.es_d},     {"es_r", r.es_r},     {"ltm", r.ltm},     {"gtm", r.gtm},
          {"gtt", r.gtt},       {"ers", r.ers},       {"score_kind", "ERS-style"}};
}

RobustnessReport report_from_json(const nlohmann::json& j) {
  RobustnessReport r;
  r.r_at_1 = j.at("r_at_1");
  r.r_at_2 = j.at("r_at_2");
  r.map = j.at("map");
  r.ca_plus = j.at("ca_plus");
  r.ca_minus = j.at("ca_minus");
  r.qa_plus = j.at("qa_plus");
  r.qa_minus = j.at("qa_minus");
  r.tma = j.at("tma");
  r.es_d = j.at("es_d");
  r.es_r = j.at("es_r");
  r.ltm = j.at("ltm");
  r.gtm = j.at("gtm");
  r.gtt = j.at("gtt");
  r.ers = j.at("ers");
  return r;
}

nlohmann::json to_json(const AttackConfig& c) {
  return {{"epsilon", c.budget.epsilon},
          {"alpha", c.budget.alpha},
          {"pgd_steps", c.budget.steps},
          {"candidates_per_class", c.candidates_per_class},
          {"seed", c.seed}};
}

}  // namespace hmlab
