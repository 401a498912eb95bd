"""Mapping a task prompt to the registered skills it needs."""
from collections import Counter
from typing import Dict, FrozenSet, Optional, Protocol, Set

from .chat import DETECT_PROMPT, ChatCompletionClient
from .errors import SkillFlowError
from .register import SkillRegister
from .utils import get_logger, normalize_word, word_tokens

logger = get_logger(__name__)

STOPWORDS = frozenset(
    normalize_word(w)
    for w in """
    a an the and or but for with to of in on at by from into near is are be this that it
    me my you your our we i please can could would will should if then when where what
    get make find check book list report return run use do does give show send share
    some any all new one two
    """.split()
)


def keywords(text: str) -> Set[str]:
    return {w for w in word_tokens(text) if w not in STOPWORDS}


class SkillDetector(Protocol):
    def detect(self, prompt: str, register: SkillRegister) -> Set[str]: ...


class KeywordDetector:
    """
    A skill matches when the prompt contains one of its distinctive keywords
    (a name or description word no other registered skill uses), or every
    keyword of its name.
    """

    def _index(self, register: SkillRegister) -> Dict[str, tuple]:
        name_words = {name: frozenset(keywords(name)) for name in register.names()}
        all_words = {
            name: name_words[name] | keywords(entry.description)
            for name, entry in register.entries.items()
        }
        usage = Counter(word for words in all_words.values() for word in words)
        return {
            name: (name_words[name], frozenset(w for w in all_words[name] if usage[w] == 1))
            for name in register.names()
        }

    def detect(self, prompt: str, register: SkillRegister) -> Set[str]:
        words = set(word_tokens(prompt))
        found: Set[str] = set()
        for name, (name_words, distinctive) in self._index(register).items():
            if distinctive & words or (name_words and name_words <= words):
                found.add(name)
        return found


class ChatCompletionDetector:
    def __init__(self, client: ChatCompletionClient, fallback: Optional[SkillDetector] = None) -> None:
        self.client = client
        self.fallback = fallback or KeywordDetector()

    def detect(self, prompt: str, register: SkillRegister) -> Set[str]:
        skills = ", ".join(f"{name} ({description})" for name, description in register.known_skills())
        try:
            answer = self.client.complete(DETECT_PROMPT.replace("{skills}", skills), prompt)
        except SkillFlowError as e:
            logger.warning("Detector adapter failed, using keywords: %s", e)
            return self.fallback.detect(prompt, register)
        if answer.strip().lower() == "none":
            return set()
        named = {part.strip().strip("'\"`") for part in answer.split(",")}
        return named & set(register.names())


def detect_skills(prompt: str, register: SkillRegister, detector: Optional[SkillDetector] = None) -> FrozenSet[str]:
    found = (detector or KeywordDetector()).detect(prompt, register)
    # Whatever the detector answers, only registered names survive.
    return frozenset(found) & frozenset(register.names())
