"""Incoming-message classification and skill-request composition."""
import re
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence, Tuple

from .chat import CLASSIFY_PROMPT, REQUEST_PROMPT, ChatCompletionClient
from .errors import InvalidArgumentError, SkillFlowError
from .models import MessageClass
from .register import SkillRegister
from .utils import get_logger

logger = get_logger(__name__)

KnownSkills = Sequence[Tuple[str, str]]

REQUEST_CUES = ("share", "send", "show", "code for", "give")
REQUEST_TEMPLATE = "Hello {owner}, could you please share the code for the skill '{skill}' ({description})?"

_DEF_LINE_RE = re.compile(r"^\s*(async\s+)?def\s+[A-Za-z_]\w*\s*\(", re.MULTILINE)
_CALL_RE = re.compile(r"[A-Za-z_]\w*\([^()]*\)")
_RETURN_RE = re.compile(r"\breturn\b")


@dataclass(frozen=True)
class Classification:
    label: MessageClass
    fallback_reason: Optional[str] = None

    @property
    def fell_back(self) -> bool:
        return self.fallback_reason is not None


def looks_like_code(text: str) -> bool:
    """A ``def`` line, or a call-shaped ``name(...)`` together with ``return``."""
    if _DEF_LINE_RE.search(text):
        return True
    return bool(_CALL_RE.search(text) and _RETURN_RE.search(text))


def mentions_request(text: str, known_skills: KnownSkills) -> bool:
    lowered = text.lower()
    if not any(cue in lowered for cue in REQUEST_CUES):
        return False
    return any(name and name in text for name, _ in known_skills)


class MessageClassifier(Protocol):
    def classify(self, text: str, known_skills: KnownSkills) -> Classification: ...


class RuleBasedClassifier:
    def classify(self, text: str, known_skills: KnownSkills) -> Classification:
        if looks_like_code(text):
            return Classification(MessageClass.INCOMING_CODE)
        if mentions_request(text, known_skills):
            return Classification(MessageClass.ASKING_FOR_CODE)
        return Classification(MessageClass.CONTINUE)


class ChatCompletionClassifier:
    """Asks a chat endpoint; falls back to the rules when it fails or answers off-script."""

    def __init__(self, client: ChatCompletionClient, fallback: Optional[MessageClassifier] = None) -> None:
        self.client = client
        self.fallback = fallback or RuleBasedClassifier()

    def classify(self, text: str, known_skills: KnownSkills) -> Classification:
        skills = ", ".join(name for name, _ in known_skills)
        try:
            answer = self.client.complete(CLASSIFY_PROMPT.replace("{skills}", skills), text)
            label = MessageClass(answer.strip().strip("'\"`").strip())
        except (SkillFlowError, ValueError) as e:
            logger.warning("Classifier adapter failed, using rules: %s", e)
            result = self.fallback.classify(text, known_skills)
            return Classification(result.label, fallback_reason=str(e))
        return Classification(label)


def classify_message(
    text: str, known_skills: KnownSkills, classifier: Optional[MessageClassifier] = None
) -> Classification:
    return (classifier or RuleBasedClassifier()).classify(text, known_skills)


class RequestComposer(Protocol):
    def compose(self, skill: str, owner: str, description: str) -> str: ...


class TemplateComposer:
    def compose(self, skill: str, owner: str, description: str) -> str:
        return REQUEST_TEMPLATE.format(owner=owner, skill=skill, description=description)


class ChatCompletionComposer:
    """Free-form request text from a chat endpoint; the template when the answer is unusable."""

    def __init__(self, client: ChatCompletionClient) -> None:
        self.client = client
        self.fallback = TemplateComposer()

    def compose(self, skill: str, owner: str, description: str) -> str:
        prompt = REQUEST_PROMPT.replace("{register}", f"{skill}: {owner}").replace("{skill}", skill)
        try:
            text = self.client.complete(prompt, f"{skill} ({description}) is owned by {owner}.")
        except SkillFlowError as e:
            logger.warning("Composer adapter failed, using template: %s", e)
            return self.fallback.compose(skill, owner, description)
        # The receiving side routes on the verbatim skill name.
        if skill not in text:
            logger.warning("Composer answer omitted skill %s, using template", skill)
            return self.fallback.compose(skill, owner, description)
        return text


def compose_skill_request(
    skill: str, owner: str, register: SkillRegister, composer: Optional[RequestComposer] = None
) -> str:
    if skill not in register:
        raise InvalidArgumentError(f"skill '{skill}' is not in the register")
    return (composer or TemplateComposer()).compose(skill, str(owner), register.description(skill))
