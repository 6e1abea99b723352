#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bikd/data.hpp"
#include "bikd/trainer.hpp"

namespace bikd {

// Resolved run configuration: flat key=value file with dotted prefixes,
// command-line overrides applied on top, unknown keys rejected.
struct RunConfig {
    std::uint64_t seed = 1;
    std::string out_dir = "out";

    DatasetSpec data;
    std::string views = "half"; // none | half | overlap3

    std::size_t model_count = 2;
    std::vector<std::string> model_names; // sized to model_count
    std::vector<std::size_t> hidden = {64, 32};

    TransferConfig pretrain_cfg;  // method fixed to solo-finetune
    TransferConfig transfer_cfg;
    int pretrain_model = -1; // cmd_pretrain target; -1 trains every model

    std::size_t cca_k = 0; // 0 means min(feature widths)

    // derived helpers
    ArchDescriptor arch_for_task() const;
    ViewPolicy view_policy() const;
    std::uint64_t model_seed(std::size_t index) const;
    std::uint64_t pretrain_seed(std::size_t index) const;
    std::uint64_t transfer_seed() const;
    std::string pretrained_path(std::size_t index) const;
    std::string after_path(std::size_t index) const;

    void validate() const;
};

// Parses the file, applies `overrides` ("key=value" strings), validates.
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides);

// Parses overrides only, on top of defaults (used by tests).
RunConfig run_config_from_overrides(const std::vector<std::string>& overrides);

} // namespace bikd
