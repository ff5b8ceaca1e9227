#include "mtlforge/data.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mtlforge/error.hpp"
#include "mtlforge/rng.hpp"

namespace mtlforge {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

void LabelSpace::validate() const {
    if (labels.size() < 2) {
        throw ConfigError("label space '" + task_name + "' needs at least 2 classes");
    }
    std::set<std::string> seen;
    for (const auto& l : labels) {
        if (l.empty()) throw ConfigError("label space '" + task_name + "' has an empty label");
        if (!seen.insert(l).second) {
            throw ConfigError("label space '" + task_name + "' repeats label '" + l + "'");
        }
    }
}

Dataset load_dataset(const std::string& path, const LabelSpace& schema, const std::string& name) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValueError("load_dataset: cannot open " + path);
    schema.validate();

    Dataset ds;
    ds.name = name.empty() ? schema.task_name : name;
    ds.label_space = schema;

    std::set<std::string> ids;
    std::string line;
    long long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        ordered_json rec;
        try {
            rec = ordered_json::parse(line);
        } catch (const std::exception& e) {
            throw ParseError("line " + std::to_string(line_no) + ": malformed record: " + e.what());
        }
        if (!rec.is_object() || !rec.contains("text") || !rec.contains("label")) {
            throw ParseError("line " + std::to_string(line_no) +
                             ": record must carry 'text' and 'label' fields");
        }
        Example ex;
        ex.text = rec["text"].get<std::string>();
        ex.label = rec["label"].get<std::string>();
        ex.id = rec.contains("id") ? rec["id"].get<std::string>() : std::to_string(line_no);

        if (trim(ex.text).empty()) {
            throw ValueError("line " + std::to_string(line_no) + ": empty text");
        }
        if (schema.index_of(ex.label) < 0) {
            throw ValueError("line " + std::to_string(line_no) + ": label '" + ex.label +
                             "' is not in the " + schema.task_name + " schema");
        }
        if (!ids.insert(ex.id).second) {
            throw ValueError("line " + std::to_string(line_no) + ": duplicate id '" + ex.id + "'");
        }
        ds.examples.push_back(std::move(ex));
    }
    return ds;
}

std::string serialize_dataset(const Dataset& ds) {
    std::string out;
    for (const auto& ex : ds.examples) {
        ordered_json rec;
        rec["id"] = ex.id;
        rec["text"] = ex.text;
        rec["label"] = ex.label;
        out += rec.dump();
        out += '\n';
    }
    return out;
}

void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValueError("save_dataset: cannot write " + path);
    out << serialize_dataset(ds);
}

const std::map<std::string, LabelSpace>& builtin_schemas() {
    static const std::map<std::string, LabelSpace> schemas = {
        {"phm2017", {"phm2017", {"non-health", "awareness", "other-mention", "self-mention"}}},
        {"hmc2019", {"hmc2019", {"health mention", "other mention", "figurative mention"}}},
        {"self2020",
         {"self2020", {"no self-disclosure", "possible self-disclosure", "clear self-disclosure"}}},
        {"ill2021", {"ill2021", {"negative", "positive"}}},
        {"goemotions",
         {"goemotions", {"anger", "disgust", "fear", "joy", "sadness", "surprise", "neutral"}}},
    };
    return schemas;
}

const std::map<std::string, LabelSpace>& synth_schemas() {
    static const std::map<std::string, LabelSpace> schemas = {
        {"synth-health",
         {"synth-health", {"non-health", "awareness", "other-mention", "self-mention"}}},
        {"synth-emotion",
         {"synth-emotion", {"anger", "disgust", "fear", "joy", "sadness", "surprise", "neutral"}}},
    };
    return schemas;
}

const LabelSpace& schema_by_name(const std::string& name) {
    const auto& builtin = builtin_schemas();
    if (auto it = builtin.find(name); it != builtin.end()) return it->second;
    const auto& synth = synth_schemas();
    if (auto it = synth.find(name); it != synth.end()) return it->second;
    std::string known;
    for (const auto& kv : builtin) known += (known.empty() ? "" : ", ") + kv.first;
    for (const auto& kv : synth) known += ", " + kv.first;
    throw ValueError("unknown schema '" + name + "' (known: " + known + ")");
}

DatasetSplits split(const Dataset& ds, const SplitSpec& spec) {
    const size_t n = ds.size();
    if (n < 10) {
        throw ValueError("split: dataset '" + ds.name + "' has " + std::to_string(n) +
                         " examples, need at least 10");
    }
    if (spec.train_frac < 0 || spec.val_frac < 0 || spec.train_frac + spec.val_frac > 1.0) {
        throw ConfigError("split: fractions must be non-negative and sum to at most 1");
    }

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng::stream(spec.seed, "split");
    rng.shuffle(order);

    const size_t n_train = static_cast<size_t>(spec.train_frac * static_cast<double>(n));
    const size_t n_val = static_cast<size_t>(spec.val_frac * static_cast<double>(n));

    DatasetSplits out;
    for (Dataset* part : {&out.train, &out.val, &out.test}) {
        part->name = ds.name;
        part->label_space = ds.label_space;
    }
    out.train.name += "/train";
    out.val.name += "/val";
    out.test.name += "/test";
    for (size_t i = 0; i < n; ++i) {
        const Example& ex = ds.examples[order[i]];
        if (i < n_train) {
            out.train.examples.push_back(ex);
        } else if (i < n_train + n_val) {
            out.val.examples.push_back(ex);
        } else {
            out.test.examples.push_back(ex);
        }
    }
    return out;
}

DatasetSplits goemotions_splits(const std::string& train_path, const std::string& val_path,
                                const std::string& test_path) {
    const LabelSpace& schema = schema_by_name("goemotions");
    DatasetSplits out;
    out.train = load_dataset(train_path, schema, "goemotions/train");
    out.val = load_dataset(val_path, schema, "goemotions/val");
    out.test = load_dataset(test_path, schema, "goemotions/test");
    for (const Dataset* part : {&out.train, &out.val, &out.test}) {
        if (part->examples.empty()) {
            std::cerr << "warning: goemotions split '" << part->name << "' is empty\n";
        }
    }
    return out;
}

namespace {

const std::vector<std::string> kDiseases = {
    "flu", "cancer", "migraine", "diabetes", "stroke", "asthma", "arthritis", "malaria",
    "measles", "anemia", "eczema", "insomnia", "vertigo", "bronchitis", "pneumonia",
    "tonsillitis", "sciatica", "gout", "shingles", "lupus", "colitis", "gastritis",
    "dermatitis", "sinusitis", "laryngitis", "tendonitis", "cataracts", "glaucoma",
    "hypertension", "fibromyalgia", "epilepsy", "psoriasis", "rhinitis", "neuralgia",
    "cirrhosis", "hepatitis", "leukemia", "lymphoma", "melanoma", "appendicitis"};

const std::vector<std::string> kTimes = {"week",   "month", "winter",  "spring",
                                         "summer", "year",  "weekend", "morning"};

// Class-neutral post frames; the class signal lives in the marker word, not
// the frame, so small training sets cannot shortcut through frame phrasing.
const std::vector<std::string> kFrames = {
    "quick note about {d} this {time}",
    "another post about {d} today",
    "thinking about {d} a lot this {time}",
    "so much {d} talk this {time}",
    "one more thing about {d} tonight",
    "the {d} topic came up again",
    "everyone keeps mentioning {d} lately",
    "saw something about {d} this {time}",
    "more {d} news this {time}",
    "cannot escape the {d} chatter",
    "the {d} thread keeps growing",
    "heard plenty about {d} this {time}"};

// Designated keyword sets, one bank per class: each example carries exactly
// one marker from its class's bank. Thirty markers per class means a 150-
// example training split sees only part of each bank, while a 2000-example
// split covers it.
const std::vector<std::vector<std::string>> kClassMarkers = {
    // non-health: hobby and figurative-chatter vocabulary
    {"playoff",     "sequel",   "podcast",  "remix",    "meme",      "stream",
     "arcade",      "sitcom",   "trivia",   "puzzle",   "karaoke",   "leaderboard",
     "speedrun",    "cosplay",  "fanfic",   "mixtape",  "esports",   "paintball",
     "skatepark",   "boardgame", "matinee", "encore",   "jukebox",   "pinball",
     "vinyl",       "minigolf", "campfire", "roadtrip", "scrimmage", "tailgate"},
    // awareness: outreach vocabulary
    {"campaign",   "fundraiser", "screening",   "webinar",     "brochure",  "outreach",
     "seminar",    "donation",   "volunteers",  "prevention",  "booth",     "pamphlet",
     "charity",    "marathon",   "telethon",    "workshop",    "bulletin",  "advocacy",
     "coalition",  "registry",   "hotline",     "symposium",   "vaccination", "flyer",
     "petition",   "billboard",  "newsletter",  "sponsorship", "taskforce", "roadshow"},
    // other-mention: third-person relation vocabulary
    {"grandmother", "grandfather", "neighbor",    "coworker",   "cousin",     "nephew",
     "niece",       "roommate",    "landlord",    "mentor",     "classmate",  "teammate",
     "boss",        "barber",      "plumber",     "tenant",     "inlaws",     "godfather",
     "godmother",   "penpal",      "bandmate",    "labmate",    "housemate",  "stepbrother",
     "stepsister",  "babysitter",  "chauffeur",   "gardener",   "butcher",    "innkeeper"},
    // self-mention: first-person treatment vocabulary
    {"diagnosed",   "prescription", "biopsy",     "relapse",     "flareup",    "dosage",
     "infusion",    "inhaler",      "insulin",    "crutches",    "stitches",   "ultrasound",
     "bloodwork",   "chemo",        "dialysis",   "migraines",   "allergies",  "physio",
     "antibiotics", "painkillers",  "symptoms",   "checkup",     "referral",   "copay",
     "pharmacy",    "bedrest",      "nausea",     "fatigue",     "dizziness",  "recovery"}};

const std::vector<std::string> kIntensifiers = {"so",    "truly", "utterly",  "deeply",
                                                "really", "quite", "awfully", "extremely"};

// Emotion word banks in goemotions label order; the cue is always
// "feeling {intensifier} {emotion word}".
const std::vector<std::vector<std::string>> kEmotionWords = {
    {"furious", "livid", "enraged", "irate", "seething", "fuming", "outraged", "irritated"},
    {"disgusted", "grossed", "repulsed", "revolted", "nauseated", "sickened", "appalled",
     "queasy"},
    {"terrified", "anxious", "frightened", "panicked", "fearful", "uneasy", "alarmed",
     "petrified"},
    {"delighted", "joyful", "thrilled", "cheerful", "elated", "grateful", "upbeat", "ecstatic"},
    {"heartbroken", "tearful", "mournful", "gloomy", "devastated", "sorrowful", "downcast",
     "dejected"},
    {"astonished", "stunned", "shocked", "amazed", "startled", "speechless", "surprised",
     "baffled"},
    {"indifferent", "neutral", "unbothered", "detached", "unmoved", "impartial", "reserved",
     "nonchalant"}};

// Primary label order: non-health, awareness, other-mention, self-mention.
const int kCanonicalEmotion[4] = {6 /*neutral*/, 3 /*joy*/, 2 /*fear*/, 4 /*sadness*/};

const std::vector<std::string> kSyllables = {"ba", "ce", "di", "fo", "gu", "ka", "lo", "mi",
                                             "nu", "po", "ra", "se", "ti", "vu", "wa", "zo"};

std::string filler_word(int index) {
    std::string w = kSyllables[static_cast<size_t>(index % 16)] +
                    kSyllables[static_cast<size_t>((index / 16) % 16)];
    if (index >= 256) w += kSyllables[static_cast<size_t>((index / 256) % 16)];
    return w;
}

std::string fill_template(std::string tpl, Rng& rng) {
    auto substitute = [&](const std::string& key, const std::vector<std::string>& bank) {
        for (;;) {
            size_t pos = tpl.find(key);
            if (pos == std::string::npos) break;
            tpl = tpl.substr(0, pos) + bank[static_cast<size_t>(rng.bounded(bank.size()))] +
                  tpl.substr(pos + key.size());
        }
    };
    substitute("{d}", kDiseases);
    substitute("{time}", kTimes);
    return tpl;
}

}  // namespace

const std::map<std::string, std::string>& synth_canonical_emotions() {
    static const std::map<std::string, std::string> m = {
        {"non-health", "neutral"},
        {"awareness", "joy"},
        {"other-mention", "fear"},
        {"self-mention", "sadness"},
    };
    return m;
}

SynthPair synth_generate(int n, int vocab_words, uint64_t seed, double correlation) {
    if (n < 20) throw ValueError("synth_generate: n must be >= 20");
    if (vocab_words < 1) throw ValueError("synth_generate: vocab_words must be >= 1");
    if (correlation < 0.0 || correlation > 1.0) {
        throw ConfigError("synth_generate: correlation must lie in [0,1]");
    }

    const LabelSpace& primary_space = schema_by_name("synth-health");
    const LabelSpace& aux_space = schema_by_name("synth-emotion");

    SynthPair out;
    out.primary.name = "synth-health";
    out.primary.label_space = primary_space;
    out.auxiliary.name = "synth-emotion";
    out.auxiliary.label_space = aux_space;

    Rng rng = Rng::stream(seed, "synth");
    for (int i = 0; i < n; ++i) {
        const int cls = static_cast<int>(rng.bounded(4));
        std::string frame =
            fill_template(kFrames[static_cast<size_t>(rng.bounded(kFrames.size()))], rng);
        const auto& markers = kClassMarkers[static_cast<size_t>(cls)];
        const std::string& marker = markers[static_cast<size_t>(rng.bounded(markers.size()))];

        int emo;
        if (rng.uniform() < correlation) {
            emo = kCanonicalEmotion[cls];
        } else {
            emo = static_cast<int>(rng.bounded(7));
        }
        const auto& words = kEmotionWords[static_cast<size_t>(emo)];
        const std::string cue =
            "feeling " +
            kIntensifiers[static_cast<size_t>(rng.bounded(kIntensifiers.size()))] + " " +
            words[static_cast<size_t>(rng.bounded(words.size()))];

        const int n_filler = 2 + static_cast<int>(rng.bounded(3));
        const int n_pre = static_cast<int>(rng.bounded(static_cast<uint64_t>(n_filler) + 1));
        std::string pre, post;
        for (int f = 0; f < n_filler; ++f) {
            std::string w = filler_word(static_cast<int>(rng.bounded(static_cast<uint64_t>(vocab_words))));
            if (f < n_pre) {
                pre += w + " ";
            } else {
                post += " " + w;
            }
        }

        Example ex;
        ex.id = std::to_string(i);
        ex.text = pre + frame + " " + marker + " " + cue + post;
        ex.label = primary_space.labels[static_cast<size_t>(cls)];
        out.primary.examples.push_back(ex);

        ex.label = aux_space.labels[static_cast<size_t>(emo)];
        out.auxiliary.examples.push_back(std::move(ex));
    }
    return out;
}

}  // namespace mtlforge
