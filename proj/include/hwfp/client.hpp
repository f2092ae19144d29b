#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hwfp/hwsim.hpp"
#include "hwfp/mapping.hpp"
#include "hwfp/rng.hpp"

namespace hwfp {

struct AuthConfig {
  std::uint32_t total_num = 10;
  std::uint32_t used_num = 5;
  std::uint32_t accept_num = 3;
  double noise_lo = 0.08;
  double noise_hi = 0.2;
  double c = 1.0;

  void validate() const;
};

struct TokenEntry {
  std::uint8_t task_index = 0;
  FingerprintValue fingerprint;

  friend bool operator==(const TokenEntry&, const TokenEntry&) = default;
};

// Wire form carries no poison mask.
struct Token {
  std::uint32_t nonce = 0;
  std::vector<TokenEntry> entries;

  friend bool operator==(const Token&, const Token&) = default;
};

/// nonce (4, big-endian) | count (1) | per entry: index (1), tag (1),
/// value (8-byte LE double or 4-byte LE word).
Bytes encode_token(const Token& token);
Token decode_token(std::span<const std::uint8_t> bytes);

/// true = keep raw. Exactly used_num entries are true.
std::vector<bool> choose_poison_mask(std::uint32_t total_num,
                                     std::uint32_t used_num, Rng& rng);

/// fp * (noise + 1) + C; SRAM words are rounded and wrapped mod 2^32.
FingerprintValue poison_value(const FingerprintValue& fp, double noise, double c);

struct IssuedToken {
  Token token;
  std::vector<bool> raw_mask;
  std::vector<HardwareTask> tasks;
  std::vector<FingerprintValue> raw;
};

struct PoisonPlan {
  std::vector<bool> raw_mask;
  double noise_lo = 0.08;
  double noise_hi = 0.2;
  double c = 1.0;
};

/// Executes the mapped tasks and poisons entries outside the mask, with an
/// independent Uniform[noise_lo, noise_hi] draw per poisoned entry. No nonce
/// bookkeeping; Client::generate_token is the checked entry point.
IssuedToken build_token(const DeviceProfile& profile, const Request& request,
                        const MappingConfig& mapping, const PoisonPlan& plan,
                        Rng& rng);

class Client {
 public:
  Client(DeviceProfile profile, AuthConfig auth, MappingConfig mapping);

  const DeviceProfile& profile() const { return profile_; }
  std::optional<std::uint32_t> last_nonce() const { return last_nonce_; }

  /// Builds a request carrying the next nonce.
  Request next_request(std::string operation, std::vector<Bytes> payloads) const;

  /// Throws NonceRegression unless request.nonce exceeds every nonce this
  /// client already issued.
  IssuedToken generate_token(const Request& request, Rng& rng);

 private:
  DeviceProfile profile_;
  AuthConfig auth_;
  MappingConfig mapping_;
  std::optional<std::uint32_t> last_nonce_;
};

}  // namespace hwfp
