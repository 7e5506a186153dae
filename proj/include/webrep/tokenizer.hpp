#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "webrep/synthetic.hpp"

namespace webrep {

// Reserved token ids. Corpus tokens start at kFirstCorpusId.
constexpr std::int32_t kPadId = 0;
constexpr std::int32_t kUnkId = 1;
constexpr std::int32_t kClsId = 2;
constexpr std::int32_t kSepId = 3;
constexpr std::int32_t kFieldSepId = 4;
constexpr std::int32_t kFirstCorpusId = 5;

constexpr int kDefaultMaxTokens = 160;

enum class Segment : std::uint8_t { Url = 0, Title = 1, Desc = 2, Special = 3 };

struct TokenSequence {
    std::vector<std::int32_t> ids;
    std::vector<Segment> segments;
    int attention_length = 0;  // count of non-PAD positions

    int length() const { return static_cast<int>(ids.size()); }
    void pad_to(int len);
};

// Frequency-thresholded word vocabulary with UNK fallback. Immutable after
// construction; lookups are safe from any thread.
class Vocab {
public:
    Vocab() = default;

    static Vocab build(const std::vector<WebpageContent>& corpus, int min_freq);

    std::int32_t lookup(const std::string& token) const;  // kUnkId when absent
    const std::string& token_string(std::int32_t id) const;
    std::int64_t frequency(const std::string& token) const;
    int size() const { return static_cast<int>(id_to_token_.size()); }

    void save(const std::string& path) const;
    static Vocab load(const std::string& path);

private:
    std::vector<std::string> id_to_token_;   // index = id
    std::vector<std::int64_t> id_to_freq_;
    // Sorted token -> id pairs; binary search keeps the type trivially
    // copyable and the file round-trip canonical.
    std::vector<std::pair<std::string, std::int32_t>> sorted_tokens_;
};

// Raw token streams per field, before vocabulary lookup.
std::vector<std::string> split_url(const std::string& url);
std::vector<std::string> split_text(const std::string& text);

// [CLS] url FIELD-SEP title FIELD-SEP description [SEP], capped at max_len.
// Truncation removes description tokens from the end first, then the title
// tail, then the now-redundant field separators; throws ContentTooLong via
// ValidationError only if the URL alone cannot fit beside CLS and SEP.
TokenSequence tokenize(const WebpageContent& content, const Vocab& vocab, int max_len = kDefaultMaxTokens);

// Human-readable, lossy rendering with segment annotations.
std::string detokenize_debug(const TokenSequence& seq, const Vocab& vocab);

}  // namespace webrep
