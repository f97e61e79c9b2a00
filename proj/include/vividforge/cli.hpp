#pragma once

#include "vividforge/flow_net.hpp"
#include "vividforge/latent_codec.hpp"
#include "vividforge/media.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace vividforge {

/// Entry point shared by the vividforge binary and the CLI tests.
/// Exit 0 on success, 1 on usage/validation errors, 2 on runtime errors.
int run_cli(const std::vector<std::string>& args);
int run_cli(int argc, char** argv);

/// encode -> one-step restore -> decode on an in-memory clip.
Video restore_video(const VelocityNet& net, const Video& low, const PatchBasis& basis, const FlowConfig& flow = {});

struct RestoreStats {
    std::uint64_t forward_calls = 0;
};

/// Reads <lq_dir>/frames, restores it with the checkpoint's net and writes
/// <out_dir>/frames.
RestoreStats restore_clip(const std::filesystem::path& ckpt, const std::filesystem::path& lq_dir,
                          const std::filesystem::path& out_dir);

} // namespace vividforge
