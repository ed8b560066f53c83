export class ConstraintViolation extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ConstraintViolation";
  }
}

export class NumericalDivergence extends Error {
  constructor(message: string) {
    super(message);
    this.name = "NumericalDivergence";
  }
}

export class ProtocolViolation extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ProtocolViolation";
  }
}
