#include "webrep/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "webrep/common.hpp"

namespace webrep {

void TokenSequence::pad_to(int len) {
    if (len < length()) throw ValidationError("pad_to: target shorter than sequence");
    ids.resize(len, kPadId);
    segments.resize(len, Segment::Special);
}

namespace {

const char* kReservedNames[] = {"<pad>", "<unk>", "<cls>", "<sep>", "<fsep>"};

std::string lower(const std::string& s) {
    std::string out = s;
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

}  // namespace

std::vector<std::string> split_url(const std::string& url) {
    // Delimiters: "://", '/', '.', '?', '&', '=', '-', '_' — all dropped.
    std::string s = lower(url);
    std::size_t scheme = s.find("://");
    if (scheme != std::string::npos) s = s.substr(0, scheme) + "/" + s.substr(scheme + 3);
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == '/' || c == '.' || c == '?' || c == '&' || c == '=' || c == '-' || c == '_') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::vector<std::string> split_text(const std::string& text) {
    // Lowercase; alphanumeric runs are tokens, everything else is a boundary.
    std::vector<std::string> out;
    std::string cur;
    for (char raw : text) {
        unsigned char c = static_cast<unsigned char>(raw);
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

Vocab Vocab::build(const std::vector<WebpageContent>& corpus, int min_freq) {
    if (corpus.empty()) throw ValidationError("build_vocab: empty corpus");
    std::map<std::string, std::int64_t> freq;
    for (const auto& doc : corpus) {
        for (auto& t : split_url(doc.url)) freq[t]++;
        for (auto& t : split_text(doc.title)) freq[t]++;
        for (auto& t : split_text(doc.description)) freq[t]++;
    }

    // Retained tokens get ids in (frequency desc, token asc) order, so the
    // most frequent token takes the smallest unreserved id.
    std::vector<std::pair<std::string, std::int64_t>> retained;
    for (const auto& [tok, f] : freq)
        if (f >= min_freq) retained.emplace_back(tok, f);
    std::sort(retained.begin(), retained.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });

    Vocab v;
    v.id_to_token_.reserve(retained.size() + kFirstCorpusId);
    v.id_to_freq_.reserve(retained.size() + kFirstCorpusId);
    for (const char* name : kReservedNames) {
        v.id_to_token_.push_back(name);
        v.id_to_freq_.push_back(0);
    }
    for (const auto& [tok, f] : retained) {
        v.sorted_tokens_.emplace_back(tok, static_cast<std::int32_t>(v.id_to_token_.size()));
        v.id_to_token_.push_back(tok);
        v.id_to_freq_.push_back(f);
    }
    std::sort(v.sorted_tokens_.begin(), v.sorted_tokens_.end());
    return v;
}

std::int32_t Vocab::lookup(const std::string& token) const {
    auto it = std::lower_bound(sorted_tokens_.begin(), sorted_tokens_.end(), token,
                               [](const auto& p, const std::string& t) { return p.first < t; });
    if (it == sorted_tokens_.end() || it->first != token) return kUnkId;
    return it->second;
}

const std::string& Vocab::token_string(std::int32_t id) const {
    if (id < 0 || id >= size()) throw ValidationError("vocab: id out of range: " + std::to_string(id));
    return id_to_token_[id];
}

std::int64_t Vocab::frequency(const std::string& token) const {
    std::int32_t id = lookup(token);
    return id == kUnkId ? 0 : id_to_freq_[id];
}

void Vocab::save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write vocab: " + path);
    out << "# webrep-vocab v1\n";
    for (int id = 0; id < size(); ++id)
        out << id_to_token_[id] << '\t' << id << '\t' << id_to_freq_[id] << '\n';
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("vocab file does not exist: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "# webrep-vocab v1")
        throw FormatError("vocab file: missing or unsupported version header: " + path);
    Vocab v;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::size_t t1 = line.find('\t');
        std::size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        if (t2 == std::string::npos)
            throw FormatError("vocab line " + std::to_string(line_no) + ": expected 3 fields");
        std::string tok = line.substr(0, t1);
        std::int32_t id = std::stoi(line.substr(t1 + 1, t2 - t1 - 1));
        std::int64_t f = std::stoll(line.substr(t2 + 1));
        if (id != static_cast<std::int32_t>(v.id_to_token_.size()))
            throw FormatError("vocab line " + std::to_string(line_no) + ": ids must be dense and ordered");
        v.id_to_token_.push_back(tok);
        v.id_to_freq_.push_back(f);
        if (id >= kFirstCorpusId) v.sorted_tokens_.emplace_back(tok, id);
    }
    if (v.size() < kFirstCorpusId) throw FormatError("vocab file: missing reserved tokens: " + path);
    for (int i = 0; i < kFirstCorpusId; ++i)
        if (v.id_to_token_[i] != kReservedNames[i])
            throw FormatError("vocab file: reserved token table corrupted: " + path);
    std::sort(v.sorted_tokens_.begin(), v.sorted_tokens_.end());
    return v;
}

TokenSequence tokenize(const WebpageContent& content, const Vocab& vocab, int max_len) {
    if (content.url.empty()) throw ValidationError("tokenize: url must be non-empty");
    if (vocab.size() < kFirstCorpusId) throw ValidationError("tokenize: vocab missing reserved ids");
    if (max_len < 8) throw ValidationError("tokenize: max_len too small");

    auto url_tokens = split_url(content.url);
    auto title_tokens = split_text(content.title);
    auto desc_tokens = split_text(content.description);

    const int a = static_cast<int>(url_tokens.size());
    // CLS and SEP always survive; the URL is never truncated.
    if (a + 2 > max_len)
        throw ContentTooLongError("tokenize: url alone exceeds " + std::to_string(max_len - 2) +
                                  " tokens (pathological input)");

    // Truncation order: description tail, then title tail, then the field
    // separators once their segments are empty anyway.
    int b = static_cast<int>(title_tokens.size());
    int c = static_cast<int>(desc_tokens.size());
    int fs = 2;
    auto total = [&] { return 2 + a + b + c + fs; };
    if (total() > max_len) {
        c = std::max(0, max_len - 2 - fs - a - b);
        if (total() > max_len) b = std::max(0, max_len - 2 - fs - a);
        while (total() > max_len && fs > 0) --fs;
    }

    TokenSequence seq;
    seq.ids.reserve(total());
    seq.segments.reserve(total());
    auto push = [&](std::int32_t id, Segment s) {
        seq.ids.push_back(id);
        seq.segments.push_back(s);
    };
    push(kClsId, Segment::Special);
    for (int i = 0; i < a; ++i) push(vocab.lookup(url_tokens[i]), Segment::Url);
    if (fs >= 1) push(kFieldSepId, Segment::Special);
    for (int i = 0; i < b; ++i) push(vocab.lookup(title_tokens[i]), Segment::Title);
    if (fs >= 2) push(kFieldSepId, Segment::Special);
    for (int i = 0; i < c; ++i) push(vocab.lookup(desc_tokens[i]), Segment::Desc);
    push(kSepId, Segment::Special);

    seq.attention_length = seq.length();
    return seq;
}

std::string detokenize_debug(const TokenSequence& seq, const Vocab& vocab) {
    static const char* kSegNames[] = {"url", "title", "desc", ""};
    std::ostringstream out;
    Segment prev = Segment::Special;
    bool first = true;
    for (int i = 0; i < seq.length(); ++i) {
        std::int32_t id = seq.ids[i];
        const std::string& tok = vocab.token_string(id);  // validates range
        if (!first) out << ' ';
        first = false;
        Segment s = seq.segments[i];
        if (s != prev && s != Segment::Special) out << '[' << kSegNames[static_cast<int>(s)] << ']' << ' ';
        prev = s == Segment::Special ? prev : s;
        out << tok;
    }
    return out.str();
}

}  // namespace webrep
