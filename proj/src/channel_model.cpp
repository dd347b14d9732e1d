#include "dynaroute/channel_model.hpp"

#include "dynaroute/rng.hpp"

namespace dynaroute {

LinkSnapshot make_link_snapshot(double planar, double offset, double theta, int n_contenders,
                                const ChannelParams& params) {
  LinkSnapshot link;
  link.distance = std::sqrt(planar * planar + offset * offset);
  if (!(link.distance > 0)) link.distance = 1e-3;
  link.path_loss = path_loss_los(link.distance, params);
  link.sinr = sinr_db(params.p_tx, link.path_loss, params.n_noise);
  link.rate = shannon_rate(params.bandwidth, link.sinr);
  link.delivery_prob = slot_success_prob(theta, n_contenders, params, link.distance);
  return link;
}

LossProcess::LossProcess(LossKind k, double p_gb, double p_bg, double drop, std::uint64_t seed)
    : kind(k), p_good_to_bad(p_gb), p_bad_to_good(p_bg), drop_prob(drop), rng_seed(seed), rng(seed) {
  for (double p : {p_gb, p_bg, drop})
    if (p < 0 || p > 1) throw std::invalid_argument("loss process: probabilities must lie in [0,1]");
}

double LossProcess::stationary_bad() const {
  const double total = p_good_to_bad + p_bad_to_good;
  return total > 0 ? p_good_to_bad / total : 0.0;
}

int sample_delivery(double prob, LossProcess& loss) {
  if (prob < 0 || prob > 1) throw std::invalid_argument("sample_delivery: probability out of range");
  // Always consume one draw so the stream position is independent of state.
  const double u = uniform01(loss.rng);
  if (loss.kind == LossKind::GilbertElliott && loss.current_state == ChannelState::Bad) return 0;
  return u < prob * (1.0 - loss.drop_prob) ? 1 : 0;
}

void markov_step(LossProcess& loss) {
  if (loss.kind != LossKind::GilbertElliott) return;
  const double u = uniform01(loss.rng);
  if (loss.current_state == ChannelState::Good) {
    if (u < loss.p_good_to_bad) loss.current_state = ChannelState::Bad;
  } else if (u < loss.p_bad_to_good) {
    loss.current_state = ChannelState::Good;
  }
}

}  // namespace dynaroute
