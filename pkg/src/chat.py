"""Minimal chat-completion HTTP client for the optional language-model adapters."""
import os
from dataclasses import dataclass
from typing import Optional

import requests

from .errors import TransportError
from .utils import get_logger

logger = get_logger(__name__)

URL_ENV = "SKILLFLOW_CHAT_URL"
KEY_ENV = "SKILLFLOW_CHAT_KEY"
MODEL_ENV = "SKILLFLOW_CHAT_MODEL"

CLASSIFY_PROMPT = """You are tasked with classifying user input into one of three categories:
- "asking_for_code": The input is a text-based request for a specific skill from the provided skill file.
- "incoming_code": The input contains Python code (even if mixed with some text).
- "continue": The input does not match either of the above exactly (e.g., general requests, random sentences).

Rules:
- For text asking for a skill from the list of skills the system has (e.g., "Can you share the code for `get_coffee'?"), classify it as "asking_for_code".
- For any input containing Python code (including a mix of text and code), classify it as "incoming_code".
- For all other inputs (e.g., "Write a Python script to scrape a website" or "What is the biggest bird in California"), classify it as "continue".

Examples:
- Example 1
  - Input: Show me the code for the skill `get_coffee'.
  - Output: asking_for_code
- Example 2
  - Input: Here's the code for `myfunction': "def my_function(x): return x * 2"
  - Output: incoming_code
- Example 3
  - Input: Demonstrate your expertise in working with APIs using Python.
  - Output: continue

Key Notes:
- Focus exclusively on Python code and related actions.
- Your output must always be one of these three: 'asking_for_code', 'incoming_code', 'continue'.
- Do not surround your response with quotation marks or any additional text. Output only the required term.

Skills List: {skills}"""

REQUEST_PROMPT = """Your task is to identify the agent or user who possesses the Python code related to the provided skill.
Once identified, craft a concise and clear message requesting them to share that specific code file.

Instructions:
- Ensure the agent's name matches exactly as listed in the `{register}` database, which contains skill assignments.
- Use the provided skill `{skill}` to specify what code is needed.
- The message should be polite and to the point, requesting the code file along with a brief description of its functionality.
- **Do not output any code or additional information—only the request message.**

Your response should be a well-formed request directed at the appropriate agent, asking them to share the relevant code."""

DETECT_PROMPT = """List the skills from the skill list that are needed to complete the user request.
Answer with the skill names separated by commas, or with the word none.

Skills List: {skills}"""


@dataclass
class ChatCompletionClient:
    url: str
    api_key: Optional[str] = None
    model: str = "gpt-4o-mini"
    timeout: float = 30.0

    @classmethod
    def from_env(cls) -> Optional["ChatCompletionClient"]:
        url = os.environ.get(URL_ENV, "").strip()
        if not url:
            return None
        return cls(
            url=url,
            api_key=os.environ.get(KEY_ENV) or None,
            model=os.environ.get(MODEL_ENV, "gpt-4o-mini"),
        )

    def complete(self, system_prompt: str, user_text: str) -> str:
        """Return the trimmed content of the first choice."""
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": self.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": system_prompt},
                {"role": "user", "content": user_text},
            ],
        }
        try:
            resp = requests.post(self.url, json=body, headers=headers, timeout=self.timeout)
            resp.raise_for_status()
            data = resp.json()
            return str(data["choices"][0]["message"]["content"]).strip()
        except requests.exceptions.Timeout:
            raise TransportError(f"chat endpoint timed out after {self.timeout}s") from None
        except requests.exceptions.HTTPError as e:
            raise TransportError(f"chat endpoint returned HTTP {e.response.status_code}") from None
        except requests.RequestException as e:
            raise TransportError(f"chat request failed: {e}") from None
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise TransportError(f"unexpected chat response: {e!r}") from None
