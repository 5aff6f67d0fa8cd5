#pragma once

#include <string>
#include <string_view>

namespace morphoprobe {

// Decodes UTF-8 into code points; throws EncodingError on malformed input.
std::u32string utf8_decode(std::string_view text);
std::string utf8_encode(std::u32string_view text);
std::string utf8_encode(char32_t cp);

}  // namespace morphoprobe
