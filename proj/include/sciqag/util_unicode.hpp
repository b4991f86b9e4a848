#pragma once

#include <string>
#include <string_view>

#include <unicode/normalizer2.h>
#include <unicode/unistr.h>

#include "sciqag/util.hpp"

namespace sciqag {

/// NFC-normalizes UTF-8 text. Exported dataset strings go through this so
/// byte-level diffs and hashes are stable across differently composed inputs.
inline std::string nfc_normalize(std::string_view utf8) {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status)) throw Error("UnicodeError", "NFC normalizer unavailable");
    const icu::UnicodeString input =
        icu::UnicodeString::fromUTF8(icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
    const icu::UnicodeString normalized = nfc->normalize(input, status);
    if (U_FAILURE(status)) throw Error("UnicodeError", "NFC normalization failed");
    std::string out;
    normalized.toUTF8String(out);
    return out;
}

}  // namespace sciqag
