#include "hmlab/hm.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "hmlab/metric.hpp"

namespace hmlab {

namespace {

double parse_number(std::string_view text, std::string_view spec) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value)) {
    throw ConfigError("bad number '" + std::string(text) + "' in destination spec '" + std::string(spec) + "'");
  }
  return value;
}

std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

}  // namespace

DestinationHardness parse_destination(std::string_view spec, double default_xi) {
  if (spec == "source") return {SourceHardness{}};
  if (spec == "lga") return {LinearGradual{}};
  if (spec.starts_with("sampler:")) return {SamplerHardness{parse_strategy(spec.substr(8))}};
  if (spec.starts_with("const:")) {
    const double c = parse_number(spec.substr(6), spec);
    if (c < -2.0 || c > 2.0) throw ConfigError("constant destination hardness must lie in [-2, 2]");
    return {ConstantHardness{c}};
  }
  if (spec.starts_with("poly:")) {
    const double q = parse_number(spec.substr(5), spec);
    if (!(q > 0.0)) throw ConfigError("poly exponent must be positive");
    return {PolyGradual{q}};
  }
  if (spec.starts_with("gboost:")) {
    const std::string_view rest = spec.substr(7);
    const auto colon = rest.rfind(':');
    double xi = default_xi;
    std::string_view base_spec = rest;
    if (colon != std::string_view::npos) {
      const std::string_view tail = rest.substr(colon + 1);
      double parsed = 0.0;
      const auto [ptr, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), parsed);
      if (ec == std::errc() && ptr == tail.data() + tail.size()) {
        xi = parse_number(tail, spec);
        base_spec = rest.substr(0, colon);
      }
    }
    auto base = std::make_shared<const DestinationHardness>(parse_destination(base_spec, default_xi));
    return {GradualBoost{std::move(base), xi}};
  }
  throw ConfigError("unknown destination hardness '" + std::string(spec) + "'");
}

std::string to_string(const DestinationHardness& destination) {
  return std::visit(Overloaded{
                        [](const SourceHardness&) { return std::string("source"); },
                        [](const SamplerHardness& s) { return "sampler:" + to_string(s.strategy); },
                        [](const ConstantHardness& c) { return "const:" + format_number(c.value); },
                        [](const GradualBoost& g) { return "gboost:" + to_string(*g.base) + ":" + format_number(g.xi); },
                        [](const LinearGradual&) { return std::string("lga"); },
                        [](const PolyGradual& p) { return "poly:" + format_number(p.exponent); },
                    },
                    destination.kind);
}

std::optional<Strategy> sampler_strategy(const DestinationHardness& destination) {
  if (const auto* s = std::get_if<SamplerHardness>(&destination.kind)) return s->strategy;
  if (const auto* g = std::get_if<GradualBoost>(&destination.kind)) return sampler_strategy(*g->base);
  return std::nullopt;
}

bool needs_sampler_triplets(const DestinationHardness& destination) {
  return sampler_strategy(destination).has_value();
}

LossTracker::LossTracker(double u) : u_(u), previous_(u) {
  if (!(u > 0.0)) throw ConfigError("loss normalizer u must be positive");
}

void LossTracker::update(double loss) { previous_ = loss; }

double LossTracker::normalized() const { return std::clamp(std::min(u_, previous_) / u_, 0.0, 1.0); }

std::vector<double> destination_value(const DestinationHardness& destination, const DestinationContext& context) {
  const std::size_t count = context.source_hardness.size();
  const double lbar = context.normalized_loss;
  if (!(lbar >= 0.0 && lbar <= 1.0)) throw std::invalid_argument("normalized loss must lie in [0, 1]");

  std::vector<double> out = std::visit(
      Overloaded{
          [&](const SourceHardness&) {
            return std::vector<double>(context.source_hardness.begin(), context.source_hardness.end());
          },
          [&](const SamplerHardness&) {
            if (context.sampler_hardness.size() != count) {
              throw std::invalid_argument("sampler destination needs one second triplet per source triplet");
            }
            return std::vector<double>(context.sampler_hardness.begin(), context.sampler_hardness.end());
          },
          [&](const ConstantHardness& c) { return std::vector<double>(count, c.value); },
          [&](const GradualBoost& g) {
            std::vector<double> base = destination_value(*g.base, context);
            for (double& v : base) v += g.xi * (1.0 - lbar);
            return base;
          },
          [&](const LinearGradual&) { return std::vector<double>(count, -context.gamma * lbar); },
          [&](const PolyGradual& p) { return std::vector<double>(count, -context.gamma * std::pow(lbar, p.exponent)); },
      },
      destination.kind);
  for (double& v : out) v = std::clamp(v, -2.0, 2.0);
  return out;
}

grad::Node hm_objective(grad::Tape& tape, grad::Node a, grad::Node p, grad::Node n,
                        std::span<const double> destination) {
  const grad::Node h = hardness(tape, a, p, n);
  if (tape.value(h).numel() != destination.size()) {
    throw ShapeError("hm_objective: " + std::to_string(destination.size()) + " destination values for " +
                     std::to_string(tape.value(h).numel()) + " triplets");
  }
  const grad::Node hd = tape.constant(Tensor::vector({destination.begin(), destination.end()}));
  const grad::Node residual = grad::clamp_min(tape, grad::sub(tape, hd, h), 0.0);
  return grad::sum(tape, grad::square(tape, residual));
}

TripletPerturbation hm_perturb(const EncoderModel& model, const Tensor& anchors, const Tensor& positives,
                               const Tensor& negatives, std::span<const double> destination,
                               const PerturbationBudget& budget, const PgdOptions& options) {
  const std::size_t t = anchors.rows();
  if (positives.shape() != anchors.shape() || negatives.shape() != anchors.shape()) {
    throw ShapeError("hm_perturb: triplet inputs " + to_string(anchors.shape()) + ", " +
                     to_string(positives.shape()) + ", " + to_string(negatives.shape()));
  }
  for (double v : destination) {
    if (!std::isfinite(v)) throw std::invalid_argument("hm_perturb: non-finite destination hardness");
  }
  const Tensor parts[] = {anchors, positives, negatives};
  const Tensor stacked = concat_rows(parts);

  std::vector<std::size_t> ia(t), ip(t), in(t);
  std::iota(ia.begin(), ia.end(), 0);
  std::iota(ip.begin(), ip.end(), t);
  std::iota(in.begin(), in.end(), 2 * t);

  const Objective objective = [&](grad::Tape& tape, grad::Node x) {
    const BoundEncoder enc = model.bind(tape, false);
    const grad::Node e = embed(tape, enc, x);
    return hm_objective(tape, grad::gather_rows(tape, e, ia), grad::gather_rows(tape, e, ip),
                        grad::gather_rows(tape, e, in), destination);
  };
  PgdResult res = pgd_minimize(objective, stacked, budget, options);
  return {slice_rows(res.perturbation, 0, t), slice_rows(res.perturbation, t, 2 * t),
          slice_rows(res.perturbation, 2 * t, 3 * t), res.backward_passes, std::move(res.objective_trace)};
}

}  // namespace hmlab
