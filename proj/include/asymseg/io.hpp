#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "asymseg/synth.hpp"
#include "asymseg/train.hpp"

namespace asymseg {

// ---- config <-> JSON (strict: unknown keys are rejected) ------------------

nlohmann::json to_json(const BlobParams& p);
nlohmann::json to_json(const SynthConfig& c);
nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const LossConfig& c);
nlohmann::json to_json(const TrainConfig& c);

BlobParams blob_params_from_json(const nlohmann::json& j);
SynthConfig synth_config_from_json(const nlohmann::json& j);
ModelConfig model_config_from_json(const nlohmann::json& j);
LossConfig loss_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Canonical dump (sorted keys) used for hashing and fingerprints.
std::string canonical_dump(const nlohmann::json& j);
std::uint64_t hash_json(const nlohmann::json& j);

// Hash of the full data section; stored in the dataset container and checked
// against the experiment config before training.
std::uint64_t dataset_config_hash(const SynthConfig& c);

// ---- dataset container -----------------------------------------------------
// Little-endian binary: header (magic, version, seed, config hash, config
// JSON, normalization stats), case records (id, split, pixels, mask, blobs),
// then per-sample records for both splits. Round-trips bit-exactly.

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// Human-readable companion with the config echo, counts and the verifiable
// config hash.
nlohmann::json dataset_manifest(const Dataset& dataset);

// ---- model container --------------------------------------------------------

void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

std::uint64_t model_fingerprint(const ModelConfig& model_config,
                                const TrainConfig& train_config, std::uint64_t dataset_hash);

// (epoch, mean loss) rows.
std::string loss_trace_csv(const std::vector<double>& trace);

void write_text_file(const std::filesystem::path& path, const std::string& contents);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace asymseg
