// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace nid {

/// Entry point behind the `nid` binary, split out so tests can drive the
/// CLI in-process. Returns the process exit status: 0 on success, 2 for bad
/// usage or a bad config, 3 for a runtime failure.
int cli_dispatch(int argc, const char* const* argv);

}  // namespace nid
