#pragma once

#include <string>

#include "lapp/io/archive.hpp"
#include "lapp/io/config.hpp"
#include "lapp/loop/loop.hpp"

namespace lapp::io {

// Everything a resumed run needs, as one archive: the serialized config that
// built the loop, every parameter / optimizer / normalizer array, per-env
// simulator and RNG states, the pending vec-env state, feature windows,
// buffer pairs and dataset triples (canonical segment JSON in string
// entries), the four stream states, and the epoch / cycle counters.
Archive checkpoint_archive(const RunConfig& cfg, const loop::LappLoop& lp);
void save_checkpoint(const std::string& path, const RunConfig& cfg,
                     const loop::LappLoop& lp);

// The config embedded at save time, reparsed and validated.
RunConfig checkpoint_config(const Archive& a);

// Installs archive state into a loop freshly built from the embedded config.
// Every piece is decoded and size-checked against the loop before anything
// is touched, so a mismatched or tampered archive leaves the loop unchanged.
// The restored loop is initialized and continues from the saved epoch.
void restore_loop(const Archive& a, loop::LappLoop& lp);

// Policy-only restore (parameters, optimizer moments, normalizer) for eval
// and transfer; cfg must be the archive's own config.
rl::PolicyBundle checkpoint_policy(const Archive& a, const RunConfig& cfg);

}  // namespace lapp::io
