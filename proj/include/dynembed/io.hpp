#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dynembed/cluster.hpp"
#include "dynembed/embedders.hpp"
#include "dynembed/models.hpp"

namespace dynembed {

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

// Splits one CSV line; double-quoted fields may contain commas.
std::vector<std::string> split_csv_line(const std::string& line);
std::string csv_field(const std::string& s);

// embedding.csv (node_label, time_label, y_1..y_D with zero padding past
// dims[t]) plus embedding.json with method, dims and singular values.
std::vector<std::string> write_embedding(const Embedding& emb, const std::filesystem::path& dir);
Embedding read_embedding(const std::filesystem::path& dir);

// latent.csv: node, sequence, weight, c_1..c_T, with 1-based sequence and
// community numbers.
void write_latent(const LatentSeries& z, const std::filesystem::path& path);
LatentSeries read_latent(const std::filesystem::path& path);

// Writes a DsbmSpec back to the key-value format accepted by DsbmSpec::load.
std::string spec_to_config(const DsbmSpec& spec);

}  // namespace dynembed
