#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iomarket/rng.hpp"
#include "iomarket/types.hpp"

namespace iomarket {

// Plain-text hierarchical key/value config: one `dotted.key = value` per line,
// `#` comments, blank lines ignored. See README for the full schema.
TradingConfig parse_config(const std::string& text);
TradingConfig load_config(const std::string& path);

// Canonical serialization. Doubles are written with 17 significant digits so
// parse(serialize(cfg)) reproduces every field bit-exactly.
std::string serialize_config(const TradingConfig& cfg);

// Structural + economic sanity checks; empty result means the config is usable.
std::vector<ConfigIssue> validate_config(const TradingConfig& cfg);

// Throws InvalidConfig when validate_config finds problems.
void require_valid(const TradingConfig& cfg);

// Applies `key=value` override strings onto the raw text form, then reparses.
// Overrides run before validation so they can repair or break any field.
TradingConfig apply_overrides(const TradingConfig& cfg, const std::vector<std::string>& overrides);

// Reference instance family: M users, N providers, all profile fields drawn
// from ranges that keep the market active (participation profitable for most
// pairs and follower budgets slack at equilibrium prices).
TradingConfig default_config(std::uint64_t seed, int M = 5, int N = 3);

// FNV-1a over the canonical serialization; used to stamp run manifests.
std::uint64_t config_hash(const TradingConfig& cfg);

// Draws per-pair SINR uniformly in [sinr_db_lo, sinr_db_hi] dB and converts to
// linear scale. Draw order is row-major (user-major), one draw per pair.
ChannelState sample_channel(const TradingConfig& cfg, Rng& rng);

}  // namespace iomarket
