#include "hmlab/defenses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hmlab/metric.hpp"

namespace hmlab {

DefenseKind parse_defense(std::string_view name) {
  if (name == "none") return DefenseKind::None;
  if (name == "hm") return DefenseKind::HM;
  if (name == "hm+ics") return DefenseKind::HMICS;
  if (name == "est") return DefenseKind::EST;
  if (name == "act") return DefenseKind::ACT;
  if (name == "minmax") return DefenseKind::MinMax;
  throw ConfigError("unknown defense '" + std::string(name) + "' (expected none|hm|hm+ics|est|act|minmax)");
}

std::string to_string(DefenseKind kind) {
  switch (kind) {
    case DefenseKind::None:
      return "none";
    case DefenseKind::HM:
      return "hm";
    case DefenseKind::HMICS:
      return "hm+ics";
    case DefenseKind::EST:
      return "est";
    case DefenseKind::ACT:
      return "act";
    case DefenseKind::MinMax:
      return "minmax";
  }
  return "unknown";
}

bool is_adversarial(DefenseKind kind) { return kind != DefenseKind::None; }

void DefenseSpec::validate() const {
  if (!(lambda >= 0.0)) throw ConfigError("ICS weight lambda must be >= 0");
  MarginConfig{gamma}.validate();
  budget.validate();
}

TripletInputs gather_triplet_inputs(const Tensor& inputs, const TripletBatch& triplets) {
  std::vector<std::size_t> a, p, n;
  for (const auto& t : triplets.triples) {
    a.push_back(t.anchor);
    p.push_back(t.positive);
    n.push_back(t.negative);
  }
  return {gather_rows(inputs, a), gather_rows(inputs, p), gather_rows(inputs, n)};
}

namespace {

std::vector<std::size_t> iota_indices(std::size_t begin, std::size_t count) {
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), begin);
  return idx;
}

Tensor plus(const Tensor& x, const Tensor& r) {
  Tensor out = x;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += r[i];
  return out;
}

double mean_of(std::span<const double> v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

DefensePerturbation split_three(const PgdResult& res, std::size_t t) {
  return {slice_rows(res.perturbation, 0, t), slice_rows(res.perturbation, t, 2 * t),
          slice_rows(res.perturbation, 2 * t, 3 * t), res.backward_passes, {}};
}

}  // namespace

DefensePerturbation defense_perturbation(const EncoderModel& model, const TripletInputs& triplets,
                                         const Tensor& benign_embeddings, const TripletBatch& source,
                                         std::span<const int> labels, const DefenseSpec& spec,
                                         const LossTracker& tracker, Rng& rng) {
  const std::size_t t = triplets.anchors.rows();
  const Shape shape = triplets.anchors.shape();
  switch (spec.kind) {
    case DefenseKind::None:
      return {Tensor(shape), Tensor(shape), Tensor(shape), 0, {}};

    case DefenseKind::HM:
    case DefenseKind::HMICS: {
      const std::vector<double> hs = triplet_hardness(source, benign_embeddings);
      std::vector<double> second;
      if (const auto strategy = sampler_strategy(spec.destination)) {
        second = triplet_hardness(sample_triplets(labels, benign_embeddings, *strategy, spec.gamma, rng),
                                  benign_embeddings);
      }
      const DestinationContext ctx{hs, second, tracker.normalized(), spec.gamma};
      std::vector<double> hd = destination_value(spec.destination, ctx);
      TripletPerturbation r =
          hm_perturb(model, triplets.anchors, triplets.positives, triplets.negatives, hd, spec.budget);
      return {std::move(r.anchor), std::move(r.positive), std::move(r.negative), r.backward_passes, std::move(hd)};
    }

    case DefenseKind::MinMax: {
      const Tensor parts[] = {triplets.anchors, triplets.positives, triplets.negatives};
      const auto ia = iota_indices(0, t), ip = iota_indices(t, t), in = iota_indices(2 * t, t);
      const Objective objective = [&](grad::Tape& tape, grad::Node x) {
        const grad::Node e = embed(tape, model.bind(tape, false), x);
        return grad::sum(tape, triplet_losses(tape, grad::gather_rows(tape, e, ia), grad::gather_rows(tape, e, ip),
                                              grad::gather_rows(tape, e, in), spec.gamma));
      };
      return split_three(pgd_maximize(objective, concat_rows(parts), spec.budget), t);
    }

    case DefenseKind::EST: {
      // Each sample independently moves its embedding as far as possible from
      // its clean position. The shift gradient vanishes at r = 0, so start
      // from a seeded point inside [-alpha, alpha].
      const Tensor parts[] = {triplets.anchors, triplets.positives, triplets.negatives};
      const Tensor stacked = concat_rows(parts);
      const Tensor clean = model.embed_values(stacked);
      PgdOptions options;
      options.initial = Tensor(stacked.shape());
      std::uniform_real_distribution<double> init(-spec.budget.alpha, spec.budget.alpha);
      for (double& v : options.initial.storage()) v = init(rng);
      const Objective objective = [&](grad::Tape& tape, grad::Node x) {
        const grad::Node e = embed(tape, model.bind(tape, false), x);
        return grad::sum(tape, grad::euclidean_rowwise(tape, e, tape.constant(clean)));
      };
      return split_three(pgd_maximize(objective, stacked, spec.budget, options), t);
    }

    case DefenseKind::ACT: {
      // Pull positive and negative embeddings together; the anchor stays clean.
      const Tensor parts[] = {triplets.positives, triplets.negatives};
      const auto ip = iota_indices(0, t), in = iota_indices(t, t);
      const Objective objective = [&](grad::Tape& tape, grad::Node x) {
        const grad::Node e = embed(tape, model.bind(tape, false), x);
        return grad::sum(tape,
                         grad::euclidean_rowwise(tape, grad::gather_rows(tape, e, ip), grad::gather_rows(tape, e, in)));
      };
      const PgdResult res = pgd_minimize(objective, concat_rows(parts), spec.budget);
      return {Tensor(shape), slice_rows(res.perturbation, 0, t), slice_rows(res.perturbation, t, 2 * t),
              res.backward_passes, {}};
    }
  }
  throw ConfigError("unknown defense kind");
}

TrainingLoss training_loss(grad::Tape& tape, const EncoderModel& model, const LabeledBatch& batch,
                           const DefenseSpec& spec, const LossTracker& tracker, Rng& rng) {
  batch.validate();
  const Tensor benign = model.embed_values(batch.inputs);
  const TripletBatch source = sample_triplets(batch.labels, benign, spec.source, spec.gamma, rng);
  const TripletInputs inputs = gather_triplet_inputs(batch.inputs, source);
  const DefensePerturbation pert = defense_perturbation(model, inputs, benign, source, batch.labels, spec, tracker, rng);

  TrainingLoss out;
  out.encoder = model.bind(tape, true);
  const grad::Node ea = embed(tape, out.encoder, tape.constant(plus(inputs.anchors, pert.anchor)));
  const grad::Node ep = embed(tape, out.encoder, tape.constant(plus(inputs.positives, pert.positive)));
  const grad::Node en = embed(tape, out.encoder, tape.constant(plus(inputs.negatives, pert.negative)));
  out.triplet_term = triplet_loss(tape, ea, ep, en, spec.gamma);
  out.total = out.triplet_term;

  StepDiagnostics& d = out.diagnostics;
  if (spec.kind == DefenseKind::HMICS) {
    // L_T(a, a~, p; margin 0): the adversarial anchor must stay closer to the
    // benign anchor than the benign positive does.
    const grad::Node a0 = embed(tape, out.encoder, tape.constant(inputs.anchors));
    const grad::Node p0 = embed(tape, out.encoder, tape.constant(inputs.positives));
    out.ics_term = grad::scale(tape, triplet_loss(tape, a0, ea, p0, 0.0), spec.lambda);
    out.total = grad::add(tape, out.triplet_term, out.ics_term);
    d.ics_term = tape.value(out.ics_term).item();
  }

  d.loss = tape.value(out.total).item();
  d.triplet_term = tape.value(out.triplet_term).item();
  const std::vector<double> hs = triplet_hardness(source, benign);
  d.source_hardness = mean_of(hs);
  double benign_loss = 0.0;
  for (double h : hs) benign_loss += std::max(0.0, h + spec.gamma);
  d.benign_loss = benign_loss / static_cast<double>(hs.size());
  d.perturbed_hardness = mean_of(tape.value(hardness(tape, ea, ep, en)).storage());
  d.destination_hardness = mean_of(pert.destination);
  d.normalized_loss = tracker.normalized();
  d.backward_passes = pert.backward_passes;
  for (double v : pert.anchor.storage()) d.max_anchor_perturbation = std::max(d.max_anchor_perturbation, std::abs(v));
  return out;
}

StepDiagnostics training_step(EncoderModel& model, AdamState& adam, const LabeledBatch& batch,
                              const DefenseSpec& spec, LossTracker& tracker, Rng& rng) {
  grad::Tape tape;
  TrainingLoss tl = training_loss(tape, model, batch, spec, tracker, rng);
  if (!std::isfinite(tl.diagnostics.loss)) throw std::runtime_error("non-finite training loss");
  tape.backward(tl.total);
  tl.diagnostics.backward_passes += tape.backward_count();
  const std::vector<Tensor> grads = parameter_grads(tape, tl.encoder);
  adam.step(model, grads);
  tracker.update(tl.diagnostics.triplet_term);
  return tl.diagnostics;
}

double mean_pairwise_cosine(const Tensor& embeddings) {
  const std::size_t n = embeddings.rows();
  if (n < 2) throw std::invalid_argument("collapse detection needs at least two embeddings");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) total += cosine_similarity(embeddings.row(i), embeddings.row(j));
  }
  return total / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

CollapseReading CollapseMonitor::observe(const Tensor& embeddings) {
  const double s = mean_pairwise_cosine(embeddings);
  history_.push_back(s);
  streak_ = s > threshold_ ? streak_ + 1 : 0;
  return {s, collapsed()};
}

}  // namespace hmlab
