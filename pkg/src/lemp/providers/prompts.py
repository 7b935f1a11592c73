"""Connection-analysis prompt templates, one per dataset domain."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    entity: str
    task: str
    points: tuple[str, str, str]

    @property
    def frame(self) -> str:
        return f"The relational implications between [{self.entity} A] and [{self.entity} B] are as below."

    def render(self, text_a: str, text_b: str) -> str:
        if not text_a or not text_b:
            raise ValueError("both node texts must be non-empty")
        lines = [self.task, "", "Your response should:"]
        lines += [f"{i}. {p}" for i, p in enumerate(self.points, start=1)]
        lines.append(f'4. Use the following sentence structure: "{self.frame}"')
        lines.append("")
        lines.append(f"{self.entity} A: {text_a}.")
        lines.append(f"{self.entity} B: {text_b}.")
        return "\n".join(lines)


def _t(id, entity, task, p1, p2, p3="Keep the response concise (within 200 words)."):
    return PromptTemplate(id, entity, task, (p1, p2, p3))


_BOTH = "Clearly explain the intellectual connection or relevance between the two papers."

TEMPLATES: dict[str, PromptTemplate] = {t.id: t for t in [
    _t("webpage", "Webpage",
       "Analyze the hyperlink relationship between Webpage A and Webpage B of the computer science department "
       "of a university, based on their contents provided below.",
       "Summarize the key content of both webpages and any notable features.",
       "Clearly explain the intellectual connection or relevance between the two webpages, highlighting how "
       "they might be related.",
       "Keep the response concise (within 200 words) and emphasize the connection between the two webpages."),
    _t("cs-citation", "Paper",
       "Analyze the citation relationship between Paper A and Paper B in the field of computer science, based "
       "on their titles and abstracts provided below.",
       "Summarize the key content of both papers, focusing on their research questions, methods, and "
       "contributions.",
       _BOTH),
    _t("pubmed", "Paper",
       "Analyze the citation relationship between Paper A and Paper B in the field of medical research on "
       "diabetes, based on their titles and abstracts provided below.",
       "Summarize the key content of both papers.",
       _BOTH),
    _t("books", "Book",
       "Analyze the co-purchased or co-viewed relationship between two History- or Children-related books on "
       "Amazon based on their titles and descriptions provided below.",
       "Summarize the main points of both items.",
       "Clearly explain the relationship between the two books."),
    _t("e-commerce", "Item",
       "Analyze the co-purchased or co-viewed relationship between two Photo- or Computers-related items on "
       "Amazon based on their user reviews provided below.",
       "Summarize the main points of both items' reviews.",
       "Clearly explain the relationship between the two items."),
    _t("knowledge", "Entry",
       "Analyze the hyperlink relationship between two Wikipedia entries based on their titles and contents "
       "provided below.",
       "Summarize the main points of both entries.",
       "Clearly explain the relationship between the two entries."),
    _t("anomaly", "Toloker",
       "Analyze the co-work relationship between two tolokers (workers) based on their profile information and "
       "task performance statistics provided below.",
       "Summarize the main points of both workers' profiles and performance.",
       "Clearly explain the relationship or relevance between the two workers.",
       "Keep the response concise (within 200 words) and emphasize the relationship between the two workers."),
    _t("amazon", "Item",
       "Analyze the relationship between two items sold on Amazon based on their item names. The items may "
       "include products such as books, music CDs, DVDs, or VHS tapes.",
       "Describe and summarize the main characteristics of both items.",
       "Clearly explain the co-purchased or co-viewed relationship between the two items.",
       "Keep the response concise (within 200 words) and emphasize the relationship between the two items."),
    _t("fitness", "Item",
       "Analyze the co-purchased or co-viewed relationship between two fitness-related items sold on Amazon "
       "based on their item titles provided below.",
       "Describe and summarize the main points of both items.",
       "Clearly explain the relationship or relevance between the two items.",
       "Keep the response concise (within 200 words) and emphasize the relationship between the two items."),
    _t("products", "Item",
       "Analyze the co-purchased relationship between two items sold on Amazon based on their product "
       "descriptions provided below.",
       "Summarize the main points of both products' descriptions.",
       "Clearly explain the relationship or relevance between the two items.",
       "Keep the response concise (within 200 words) and emphasize the relationship between the two items."),
    _t("generic", "Node",
       "Analyze the relationship between two connected entities in a graph, based on their descriptions "
       "provided below.",
       "Summarize the main points of both entities.",
       "Clearly explain the relationship or relevance between the two entities.",
       "Keep the response concise (within 200 words) and emphasize the relationship between the two entities."),
]}


def get_template(template_id: str) -> PromptTemplate:
    try:
        return TEMPLATES[template_id]
    except KeyError:
        raise KeyError(f"unknown template {template_id!r}; choose from {sorted(TEMPLATES)}") from None


def render_prompt(template: str | PromptTemplate, text_a: str, text_b: str) -> str:
    if isinstance(template, str):
        template = get_template(template)
    return template.render(text_a, text_b)
