#include "pmd/prompts.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "pmd/errors.hpp"

namespace pmd {

namespace {

constexpr RephraseDemo kRephraseDemos[] = {
    {"Is there a bowl on the table?", AnswerValue::kYes, "There is a bowl on the table."},
    {"Are the eggs cracked?", AnswerValue::kNo, "The eggs are not cracked."},
    {"Does the cardboard box look open?", AnswerValue::kYes, "The cardboard box looks open."},
    {"Are there any leaves outside of the basket?", AnswerValue::kNo,
     "There are not any leaves outside of the basket."},
    {"Is the orange peeled?", AnswerValue::kYes, "The orange is peeled."},
    {"Is the mug empty?", AnswerValue::kNo, "The mug is not empty."},
    {"Are there hedge trimmers in the image?", AnswerValue::kYes,
     "There are hedge trimmers in the image."},
    {"Has the light switch been turned on?", AnswerValue::kNo,
     "The light switch has not been turned on."},
    {"Does the table have any cups on it?", AnswerValue::kYes, "The table has cups on it."},
    {"Is the cabinet closed?", AnswerValue::kNo, "The cabinet is not closed."},
};

IclBank make_default_bank() {
  IclBank bank;
  bank.entries = {
      {"Soak the sponge in a soapy water with your hands",
       {"Is there a sponge?", "Is the sponge in water?", "Is the water soapy?"}},
      {"Open the bottle",
       {"Is there a bottle in the image?", "Is the bottle open?",
        "Does the bottle have a lid on it?"}},
      {"Take the baking tray away from the table",
       {"Can you see a baking tray?", "Is the baking tray on the table?",
        "Is the baking tray picked up by someone?"}},
      {"Turn on a torch light",
       {"Is there a torch light in the photo?", "Is the torch light powered on?",
        "Is the torch light lit up?"}},
      {"Fold the right edge of the wrapper",
       {"Is there a wrapper in the image?", "Is the wrapper completely flat?",
        "Is the right edge of the wrapper folded?"}},
      {"Pour the water into the blue container",
       {"Do you see a blue container anywhere?", "Is there water in the blue container?",
        "Is the blue container empty?"}},
      {"Paint the patio with the paint brush",
       {"Is this a photo of a patio?", "Is the patio painted?",
        "Is someone holding a paint brush?"}},
      {"Spread the black peas on the salad with the spoon in your hand",
       {"Is there a salad?", "Are there black peas on the salad?",
        "Is there a spoon in someone's hand?"}},
      {"Scoop paint from the pallet on the table with the paint brush",
       {"Do you see a paint brush and a paint palette?", "Is there paint on the paint brush?",
        "Is the paint brush in someone's hand?"}},
      {"Wash the car with a sponge in your hand",
       {"Do you see a car?", "Is the car clean?", "Is the sponge being held?"}},
      {"Pick the scrubber from the sink",
       {"Do you see a scrubber somewhere?", "Is the scrubber in the sink?",
        "Is the scrubber in someone's hand?"}},
      {"Peel the onion",
       {"Is there an onion in the image?", "Is the onion's skin removed?",
        "Is the onion peeled?"}},
      {"Put the dirt in the dust bin",
       {"Is there a dust bin?", "Is there dirt in the dust bin?",
        "Is there any dirt outside of the dust bin?"}},
      {"Cut dough into two",
       {"Do you see any dough?", "Is the dough in two pieces?", "Is the dough whole?"}},
      {"Break the walnut with the nutcracker in your hand",
       {"Do you see a walnut?", "Is the walnut cracked?",
        "Is there a nut cracker in someone's hand?"}},
      {"Turn off the tap",
       {"Is there a tap in the photo?", "Is the water running?", "Is the faucet switched off?"}},
      {"Heat the edge of the bag with the lighter",
       {"Do you see a bag and a lighter?", "Is there a flame coming from the lighter?",
        "Is the lighter near the bag?"}},
      {"Close the fridge",
       {"Is there a fridge?", "Is the fridge open?", "Can you see inside the fridge?"}},
      {"Chop green beans with a knife on the chopping board",
       {"Do you see green beans on a cutting board?", "Are the green beans sliced?",
        "Is someone using a knife?"}},
      {"Drop the brush in your hand on the oven",
       {"Is there a brush in the scene?", "Is there an oven?", "Is the brush on the oven?"}},
  };
  return bank;
}

void append_history(std::string& out, std::span<const DialogTurn> raw_history) {
  for (const auto& turn : raw_history) {
    out += "Q: ";
    out += turn.question;
    out += "\nA: ";
    out += to_string(turn.answer.value);
    out += '\n';
  }
}

void validate_bank(const IclBank& bank) {
  if (bank.entries.size() != IclBank::kSize) {
    throw ValidationError("ICL bank must hold exactly 20 procedures, got " +
                          std::to_string(bank.entries.size()));
  }
  for (const auto& e : bank.entries) {
    if (e.procedure.empty()) throw ValidationError("ICL bank entry with empty procedure");
    for (const auto& q : e.questions) {
      if (q.empty()) throw ValidationError("ICL bank entry with empty question: " + e.procedure);
    }
  }
}

}  // namespace

const IclBank& default_icl_bank() {
  static const IclBank bank = make_default_bank();
  return bank;
}

IclBank load_icl_bank(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open ICL bank: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("ICL bank is not valid JSON: ") + e.what());
  }
  IclBank bank;
  for (const auto& e : doc.at("entries")) {
    const auto qs = e.at("questions").get<std::vector<std::string>>();
    if (qs.size() != 3) {
      throw ValidationError("ICL bank entry needs exactly 3 questions: " +
                            e.at("procedure").get<std::string>());
    }
    bank.entries.push_back({e.at("procedure").get<std::string>(), {qs[0], qs[1], qs[2]}});
  }
  validate_bank(bank);
  return bank;
}

std::string icl_bank_to_json(const IclBank& bank) {
  nlohmann::ordered_json doc;
  doc["entries"] = nlohmann::ordered_json::array();
  for (const auto& e : bank.entries) {
    doc["entries"].push_back(
        {{"procedure", e.procedure},
         {"questions", std::vector<std::string>(e.questions.begin(), e.questions.end())}});
  }
  return doc.dump(2) + "\n";
}

std::span<const RephraseDemo> rephrase_demonstrations() { return kRephraseDemos; }

std::string build_rephrase_prompt(std::string_view question, AnswerValue answer) {
  std::string out = "Rephrase each question and answer as a declarative statement.\n\n";
  for (const auto& d : kRephraseDemos) {
    out += "Question: ";
    out += d.question;
    out += "\nAnswer: ";
    out += to_string(d.answer);
    out += "\nStatement: ";
    out += d.statement;
    out += "\n\n";
  }
  out += "Question: ";
  out += question;
  out += "\nAnswer: ";
  out += to_string(answer);
  out += "\nStatement:";
  return out;
}

std::string vqg_preamble(std::string_view procedure) {
  std::string out = "This is a photo of someone working on the procedure \"";
  out += procedure;
  out +=
      "\". I will ask a series of different yes/no questions to gather information about the "
      "state of the scene, then use it to determine whether the person has successfully "
      "completed the procedure. The goal is to extract as much relevant information as possible "
      "from the scene, so I will not repeat questions. I will try to ask short and simple "
      "questions about physical states and locations that are possible to observe from the "
      "photo.";
  return out;
}

std::string build_vqg_prompt(std::string_view procedure, std::span<const DialogTurn> raw_history,
                             bool gpt_compat) {
  std::string out = vqg_preamble(procedure);
  if (gpt_compat) out += " Generate an appropriate yes/no question.";
  out += '\n';
  append_history(out, raw_history);
  out += "Q:";
  return out;
}

std::string build_icl_prompt(std::string_view procedure, const IclBank& bank,
                             std::span<const std::string> recent_questions, Rng& rng) {
  std::vector<std::size_t> order(bank.entries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  portable_shuffle(std::span<std::size_t>(order), rng);

  std::string out =
      "Here are some procedures, each followed by yes/no questions one could ask about a photo "
      "to judge whether the procedure was done.\n\n";
  for (std::size_t idx : order) {
    const auto& e = bank.entries[idx];
    out += "Procedure: ";
    out += e.procedure;
    out += '\n';
    for (const auto& q : e.questions) {
      out += "Q: ";
      out += q;
      out += '\n';
    }
    out += '\n';
  }
  out += "Procedure: ";
  out += procedure;
  out += '\n';
  const std::size_t keep = std::min<std::size_t>(2, recent_questions.size());
  if (keep > 0) {
    out += "Previous questions:\n";
    for (std::size_t i = recent_questions.size() - keep; i < recent_questions.size(); ++i) {
      out += "Q: ";
      out += recent_questions[i];
      out += '\n';
    }
  }
  out += "Q:";
  return out;
}

std::string build_success_prompt(std::string_view procedure,
                                 std::span<const DialogTurn> raw_history, bool rationale_free) {
  std::string out;
  if (rationale_free) {
    out = "This is a photo of someone working on the procedure \"";
    out += procedure;
    out += "\". Q: Based on the image, has the procedure \"";
    out += procedure;
    out += "\" been successfully completed? A:";
    return out;
  }
  out = vqg_preamble(procedure);
  out += '\n';
  append_history(out, raw_history);
  out += "Q: Based on the image and above information, has the procedure \"";
  out += procedure;
  out += "\" been successfully completed? A:";
  return out;
}

std::string build_vqa_prompt(std::string_view question, bool gpt_compat) {
  std::string out = "Q: ";
  out += question;
  if (gpt_compat) out += " (yes/no)";
  out += "\nA:";
  return out;
}

}  // namespace pmd
