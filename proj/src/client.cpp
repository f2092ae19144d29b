#include "hwfp/client.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hwfp/error.hpp"

namespace hwfp {

void AuthConfig::validate() const {
  if (total_num < 1 || total_num > 255) {
    throw Error(ErrorCode::RangeError, "totalNum must be in [1, 255]");
  }
  if (used_num < 1 || used_num > total_num) {
    throw Error(ErrorCode::RangeError, "usedNum must be in [1, totalNum]");
  }
  if (accept_num < 1 || accept_num > used_num) {
    throw Error(ErrorCode::RangeError, "acceptNum must be in [1, usedNum]");
  }
  if (!(noise_lo > 0) || noise_hi < noise_lo) {
    throw Error(ErrorCode::RangeError, "need 0 < noise_lo <= noise_hi");
  }
}

std::vector<bool> choose_poison_mask(std::uint32_t total_num,
                                     std::uint32_t used_num, Rng& rng) {
  if (total_num < 1 || used_num < 1 || used_num > total_num) {
    throw Error(ErrorCode::RangeError, "need 1 <= usedNum <= totalNum");
  }
  std::vector<std::uint32_t> order(total_num);
  std::iota(order.begin(), order.end(), 0u);
  // Partial Fisher-Yates: the first used_num slots are a uniform subset.
  for (std::uint32_t i = 0; i < used_num; ++i) {
    std::uniform_int_distribution<std::uint32_t> pick(i, total_num - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  std::vector<bool> mask(total_num, false);
  for (std::uint32_t i = 0; i < used_num; ++i) mask[order[i]] = true;
  return mask;
}

FingerprintValue poison_value(const FingerprintValue& fp, double noise, double c) {
  if (fp.is_analog()) {
    return FingerprintValue::analog(fp.analog() * (noise + 1.0) + c);
  }
  const double scaled = static_cast<double>(fp.bits()) * (noise + 1.0) + c;
  const auto rounded = static_cast<std::uint64_t>(std::llround(scaled));
  return FingerprintValue::bits32(static_cast<std::uint32_t>(rounded & 0xFFFFFFFFu));
}

IssuedToken build_token(const DeviceProfile& profile, const Request& request,
                        const MappingConfig& mapping, const PoisonPlan& plan,
                        Rng& rng) {
  IssuedToken out;
  out.tasks = map_message(request, mapping);
  if (plan.raw_mask.size() != out.tasks.size()) {
    throw Error(ErrorCode::InvalidArgument, "poison mask length != totalNum");
  }
  out.raw_mask = plan.raw_mask;
  out.token.nonce = request.nonce;
  std::uniform_real_distribution<double> noise(plan.noise_lo, plan.noise_hi);
  for (std::size_t i = 0; i < out.tasks.size(); ++i) {
    const FingerprintValue raw = execute_task(profile, out.tasks[i], rng);
    out.raw.push_back(raw);
    FingerprintValue sent = raw;
    if (!plan.raw_mask[i]) {
      const double n = plan.noise_hi > plan.noise_lo ? noise(rng) : plan.noise_lo;
      sent = poison_value(raw, n, plan.c);
    }
    out.token.entries.push_back({static_cast<std::uint8_t>(i), sent});
  }
  return out;
}

Client::Client(DeviceProfile profile, AuthConfig auth, MappingConfig mapping)
    : profile_(std::move(profile)), auth_(auth), mapping_(std::move(mapping)) {
  auth_.validate();
  mapping_.validate();
  if (mapping_.total_num != auth_.total_num) {
    throw Error(ErrorCode::InvalidArgument, "mapping and auth totalNum differ");
  }
}

Request Client::next_request(std::string operation, std::vector<Bytes> payloads) const {
  Request r;
  r.operation = std::move(operation);
  r.nonce = last_nonce_ ? *last_nonce_ + 1 : 1;
  r.payloads = std::move(payloads);
  return r;
}

IssuedToken Client::generate_token(const Request& request, Rng& rng) {
  if (last_nonce_ && request.nonce <= *last_nonce_) {
    throw Error(ErrorCode::NonceRegression,
                "nonce " + std::to_string(request.nonce) + " does not exceed " +
                    std::to_string(*last_nonce_));
  }
  PoisonPlan plan{choose_poison_mask(auth_.total_num, auth_.used_num, rng),
                  auth_.noise_lo, auth_.noise_hi, auth_.c};
  IssuedToken issued = build_token(profile_, request, mapping_, plan, rng);
  last_nonce_ = request.nonce;
  return issued;
}

}  // namespace hwfp
