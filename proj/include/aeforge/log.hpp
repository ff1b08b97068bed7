#pragma once

#include <string_view>

namespace aeforge {

// stderr logging; data never goes to stdout through these.
void log_info(std::string_view message);
void log_warn(std::string_view message);

// Silences info-level messages (warnings still print). Used by tests.
void set_quiet(bool quiet);

}  // namespace aeforge
