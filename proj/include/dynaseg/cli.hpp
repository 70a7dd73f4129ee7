#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace dynaseg {

/// Fixed 256-entry color table keyed by label id. Colors come from a hash of
/// the id alone, so the same label renders the same color across runs and
/// images; ids beyond 255 wrap.
struct PaletteSpec {
    std::array<std::array<uint8_t, 3>, 256> colors{};

    static PaletteSpec make();
    const std::array<uint8_t, 3>& color_for(int label) const {
        return colors[static_cast<size_t>(label) % colors.size()];
    }
};

/// Entry point behind the `dynaseg` binary. Never calls exit(); returns
/// 0 on success, 2 on configuration/manifest errors, 3 when any per-image
/// work failed.
int cli_main(int argc, const char* const* argv);

}  // namespace dynaseg
