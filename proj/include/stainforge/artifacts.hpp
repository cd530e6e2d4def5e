#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "stainforge/checkpoint.hpp"
#include "stainforge/diffusion.hpp"
#include "stainforge/prompts.hpp"
#include "stainforge/vpgan.hpp"

namespace stainforge {

// Archive-backed persistence for each pipeline artifact. Every save embeds
// the producing RunConfig snapshot (JSON) for provenance.

std::uint64_t bank_digest(const PromptBank& bank);
std::uint64_t anchors_digest(const ConceptAnchorSet& anchors);

void save_prompt_bank(const std::filesystem::path& path, const PromptBank& bank,
                      const std::string& config_json);
PromptBank load_prompt_bank(const std::filesystem::path& path, std::string* config_json = nullptr);

void save_anchors(const std::filesystem::path& path, const ConceptAnchorSet& anchors,
                  const std::string& config_json);
ConceptAnchorSet load_anchors(const std::filesystem::path& path,
                              std::string* config_json = nullptr);

// Generators + discriminators + optimizer state + batch RNG state + config
// snapshot + prompt/anchor provenance digests.
void save_vpgan_checkpoint(const std::filesystem::path& path, const VpganTrainer& trainer,
                           const std::string& config_json, std::uint64_t bank_digest_value,
                           std::uint64_t anchors_digest_value);

struct VpganCheckpoint {
    TranslatorPair pair;
    VpganTrainConfig train_config;  // architecture fields are authoritative
    std::string config_json;
    std::uint64_t bank_digest = 0;
    std::uint64_t anchors_digest = 0;
};

VpganCheckpoint load_vpgan_checkpoint(const std::filesystem::path& path);

// Restores optimizer moments, step counter and RNG so a loaded trainer
// continues bit-identically.
void restore_vpgan_trainer(VpganTrainer& trainer, const std::filesystem::path& path);

void save_diffusion_checkpoint(const std::filesystem::path& path,
                               const DiffusionTrainResult& result, int channels,
                               std::uint64_t seed, const std::string& config_json);

struct DiffusionCheckpoint {
    NoisePredictor predictor;
    DiffusionSchedule schedule;
    std::string config_json;
};

DiffusionCheckpoint load_diffusion_checkpoint(const std::filesystem::path& path);

}  // namespace stainforge
